#pragma once

#include <string>
#include <vector>

namespace ksc::svg {

// Minimal deterministic SVG plotting: identical inputs yield byte-identical
// files (fixed formatting, no timestamps).

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  std::string label;
};

struct Disk {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;
  std::string color = "#d62728";
  std::string label;
};

std::string line_plot(const std::string& title, const std::vector<Series>& series,
                      const std::vector<Disk>& disks = {}, int width = 640,
                      int height = 480, bool equal_axes = false);

// Overlaid pair of histograms with shared binning.
std::string histogram_plot(const std::string& title,
                           const std::vector<double>& before,
                           const std::vector<double>& after, int bins,
                           const std::string& label_before,
                           const std::string& label_after, int width = 640,
                           int height = 480);

// Shared binning helper (also the test oracle recount target).
std::vector<int> histogram_counts(const std::vector<double>& values, int bins,
                                  double lo, double hi);

void write_file(const std::string& path, const std::string& content);

}  // namespace ksc::svg
