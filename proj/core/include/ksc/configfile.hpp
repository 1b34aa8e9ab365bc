#pragma once

#include <optional>
#include <string>
#include <vector>

namespace ksc {

// Nested key-value configuration text. Grammar, one entry per line:
//
//   key value tokens...     # scalar or list entry
//   key {                   # nested block
//     ...
//   }
//
// '#' starts a comment. Keys may repeat (e.g. several `obstacle` blocks).
class ConfigNode {
 public:
  const std::string& name() const { return name_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool has(const std::string& key) const;
  const ConfigNode& child(const std::string& key) const;  // throws if missing
  std::vector<const ConfigNode*> children(const std::string& key) const;
  const std::vector<ConfigNode>& all_children() const { return children_; }

  // Scalar accessors on this node's tokens.
  std::string as_string() const;
  double as_double() const;
  long as_int() const;
  bool as_bool() const;
  std::vector<double> as_doubles() const;

  // Lookup + conversion with defaults.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;

  static ConfigNode parse_file(const std::string& path);
  static ConfigNode parse_string(const std::string& text);

  friend class ConfigParser;

 private:
  std::string name_;
  std::vector<std::string> tokens_;
  std::vector<ConfigNode> children_;
};

// Writer used for manifests and tuned-parameter files.
class ConfigWriter {
 public:
  void open_block(const std::string& key);
  void close_block();
  void entry(const std::string& key, const std::string& value);
  void entry(const std::string& key, double value);
  void entry(const std::string& key, long value);
  void entry(const std::string& key, const std::vector<double>& values);
  std::string str() const { return out_; }
  void write_file(const std::string& path) const;

 private:
  std::string out_;
  int depth_ = 0;
};

// Round-trippable double formatting (shortest form is not required; %.17g
// preserves the exact value).
std::string format_double(double v);

}  // namespace ksc
