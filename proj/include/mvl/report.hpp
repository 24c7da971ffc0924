#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace mvl {

/// Header row plus one row per index; doubles with 17 significant digits.
void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns);
void write_csv_file(const std::filesystem::path& file, const std::vector<std::string>& header,
                    const std::vector<std::vector<double>>& columns);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
};

/// SVG 1.1 line plot.  Points that cannot be shown on a log axis are
/// dropped.
void write_svg(std::ostream& out, const PlotSpec& spec, const std::vector<Series>& series);
void write_svg_file(const std::filesystem::path& file, const PlotSpec& spec, const std::vector<Series>& series);

/// Writes text to a file, creating parent directories.
void write_text_file(const std::filesystem::path& file, const std::string& text);

}  // namespace mvl
