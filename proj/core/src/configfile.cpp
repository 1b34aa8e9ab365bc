#include "ksc/configfile.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ksc {

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) {
    if (tok[0] == '#') break;
    out.push_back(tok);
  }
  return out;
}

}  // namespace

class ConfigParser {
 public:
  explicit ConfigParser(const std::string& text) : stream_(text) {}

  ConfigNode parse() {
    ConfigNode root;
    root.name_ = "<root>";
    parse_block(root);
    if (!at_end_) throw std::runtime_error("config: unmatched '}'");
    return root;
  }

 private:
  void parse_block(ConfigNode& node) {
    std::string line;
    while (std::getline(stream_, line)) {
      auto toks = tokenize(line);
      if (toks.empty()) continue;
      if (toks[0] == "}") return;
      ConfigNode child;
      child.name_ = toks[0];
      if (toks.back() == "{") {
        child.tokens_.assign(toks.begin() + 1, toks.end() - 1);
        parse_block(child);
      } else {
        child.tokens_.assign(toks.begin() + 1, toks.end());
      }
      node.children_.push_back(std::move(child));
    }
    at_end_ = true;
  }

  std::istringstream stream_;
  bool at_end_ = false;
};

bool ConfigNode::has(const std::string& key) const {
  for (const auto& c : children_)
    if (c.name_ == key) return true;
  return false;
}

const ConfigNode& ConfigNode::child(const std::string& key) const {
  for (const auto& c : children_)
    if (c.name_ == key) return c;
  throw std::runtime_error("config: missing key '" + key + "' under '" + name_ + "'");
}

std::vector<const ConfigNode*> ConfigNode::children(const std::string& key) const {
  std::vector<const ConfigNode*> out;
  for (const auto& c : children_)
    if (c.name_ == key) out.push_back(&c);
  return out;
}

std::string ConfigNode::as_string() const {
  if (tokens_.empty()) throw std::runtime_error("config: '" + name_ + "' has no value");
  return tokens_[0];
}

double ConfigNode::as_double() const {
  return std::stod(as_string());
}

long ConfigNode::as_int() const {
  return std::stol(as_string());
}

bool ConfigNode::as_bool() const {
  const std::string s = as_string();
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw std::runtime_error("config: '" + name_ + "' is not a boolean: " + s);
}

std::vector<double> ConfigNode::as_doubles() const {
  std::vector<double> out;
  out.reserve(tokens_.size());
  for (const auto& t : tokens_) out.push_back(std::stod(t));
  return out;
}

std::string ConfigNode::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? child(key).as_string() : fallback;
}

double ConfigNode::get_double(const std::string& key, double fallback) const {
  return has(key) ? child(key).as_double() : fallback;
}

long ConfigNode::get_int(const std::string& key, long fallback) const {
  return has(key) ? child(key).as_int() : fallback;
}

bool ConfigNode::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? child(key).as_bool() : fallback;
}

std::vector<double> ConfigNode::get_doubles(const std::string& key) const {
  return has(key) ? child(key).as_doubles() : std::vector<double>{};
}

ConfigNode ConfigNode::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

ConfigNode ConfigNode::parse_string(const std::string& text) {
  return ConfigParser(text).parse();
}

void ConfigWriter::open_block(const std::string& key) {
  out_.append(2 * depth_, ' ');
  out_ += key + " {\n";
  ++depth_;
}

void ConfigWriter::close_block() {
  if (depth_ <= 0) throw std::runtime_error("config writer: unmatched close_block");
  --depth_;
  out_.append(2 * depth_, ' ');
  out_ += "}\n";
}

void ConfigWriter::entry(const std::string& key, const std::string& value) {
  out_.append(2 * depth_, ' ');
  out_ += key + " " + value + "\n";
}

void ConfigWriter::entry(const std::string& key, double value) {
  entry(key, format_double(value));
}

void ConfigWriter::entry(const std::string& key, long value) {
  entry(key, std::to_string(value));
}

void ConfigWriter::entry(const std::string& key, const std::vector<double>& values) {
  std::string joined;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) joined += ' ';
    joined += format_double(values[i]);
  }
  entry(key, joined);
}

void ConfigWriter::write_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config writer: cannot open " + path);
  out << out_;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace ksc
