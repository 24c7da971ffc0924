#include "mvl/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mvl {

namespace {

std::ofstream open_out(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  return out;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

const char* const kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  double map(double v) const { return ((log ? std::log10(v) : v) - lo) / (hi - lo); }

  std::vector<double> ticks() const {
    std::vector<double> t;
    if (log) {
      for (double e = std::ceil(lo - 1e-9); e <= hi + 1e-9; e += 1.0) t.push_back(std::pow(10.0, e));
      return t;
    }
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
    return t;
  }
};

Axis make_axis(const std::vector<const std::vector<double>*>& data, bool log) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* d : data)
    for (double v : *d) {
      if (!std::isfinite(v) || (log && v <= 0.0)) continue;
      const double w = log ? std::log10(v) : v;
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  if (log) {
    lo = std::floor(lo);
    hi = std::ceil(hi);
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  return {lo, hi, log};
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size()) throw std::invalid_argument("write_csv: header and column counts differ");
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns)
    if (c.size() != rows) throw std::invalid_argument("write_csv: columns differ in length");
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  const auto old = out.precision(17);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c][r];
    out << '\n';
  }
  out.precision(old);
}

void write_csv_file(const std::filesystem::path& file, const std::vector<std::string>& header,
                    const std::vector<std::vector<double>>& columns) {
  std::ofstream out = open_out(file);
  write_csv(out, header, columns);
}

void write_svg(std::ostream& out, const PlotSpec& spec, const std::vector<Series>& series) {
  constexpr double W = 720, H = 480, L = 80, R = 170, T = 40, B = 60;
  std::vector<const std::vector<double>*> xs, ys;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("write_svg: series x and y differ in length");
    xs.push_back(&s.x);
    ys.push_back(&s.y);
  }
  const Axis ax = make_axis(xs, spec.log_x), ay = make_axis(ys, spec.log_y);
  auto px = [&](double v) { return L + ax.map(v) * (W - L - R); };
  auto py = [&](double v) { return H - B - ay.map(v) * (H - T - B); };

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(spec.title)
      << "</text>\n"
      << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ax.ticks()) {
    const double x = px(t);
    out << "<line x1=\"" << fmt(x, 6) << "\" y1=\"" << H - B << "\" x2=\"" << fmt(x, 6) << "\" y2=\"" << H - B + 5
        << "\" stroke=\"black\"/>\n<text x=\"" << fmt(x, 6) << "\" y=\"" << H - B + 18
        << "\" text-anchor=\"middle\">" << fmt(t) << "</text>\n";
  }
  for (double t : ay.ticks()) {
    const double y = py(t);
    out << "<line x1=\"" << L - 5 << "\" y1=\"" << fmt(y, 6) << "\" x2=\"" << L << "\" y2=\"" << fmt(y, 6)
        << "\" stroke=\"black\"/>\n<text x=\"" << L - 8 << "\" y=\"" << fmt(y + 4, 6)
        << "\" text-anchor=\"end\">" << fmt(t) << "</text>\n";
  }
  out << "<text x=\"" << (W - R + L) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">"
      << escape(spec.x_label) << (spec.log_x ? " (log)" : "") << "</text>\n"
      << "<text transform=\"translate(18," << (H - B + T) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(spec.y_label) << (spec.log_y ? " (log)" : "") << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* colour = kColours[i % std::size(kColours)];
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      if ((spec.log_x && s.x[k] <= 0.0) || (spec.log_y && s.y[k] <= 0.0)) continue;
      out << (first ? "" : " ") << fmt(px(s.x[k]), 6) << ',' << fmt(py(s.y[k]), 6);
      first = false;
    }
    out << "\"/>\n";
    const double ly = T + 16 + 18 * static_cast<double>(i);
    out << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 36 << "\" y2=\"" << ly - 4
        << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n<text x=\"" << W - R + 42 << "\" y=\"" << ly << "\">"
        << escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
}

void write_svg_file(const std::filesystem::path& file, const PlotSpec& spec, const std::vector<Series>& series) {
  std::ofstream out = open_out(file);
  write_svg(out, spec, series);
}

void write_text_file(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out = open_out(file);
  out << text;
}

}  // namespace mvl
