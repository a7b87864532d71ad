#include "segtransfer/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace segtransfer {

namespace {

std::string xml_escape(const std::string& s) {
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

class Svg {
 public:
  Svg(int width, int height) : w_(width), h_(height) {
    body_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\""
          << h_ << "\" viewBox=\"0 0 " << w_ << " " << h_ << "\">\n"
          << "<rect width=\"" << w_ << "\" height=\"" << h_ << "\" fill=\"white\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const char* color,
            double width = 1.0, bool dashed = false) {
    body_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\""
          << y2 << "\" stroke=\"" << color << "\" stroke-width=\"" << width << "\"";
    if (dashed) body_ << " stroke-dasharray=\"4 3\"";
    body_ << "/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& color) {
    body_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\""
          << h << "\" fill=\"" << color << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, int size = 11,
            const char* anchor = "start", const char* color = "#333") {
    body_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\" fill=\""
          << color << "\">" << xml_escape(s) << "</text>\n";
  }

  std::string finish() {
    body_ << "</svg>\n";
    return body_.str();
  }

 private:
  int w_, h_;
  std::ostringstream body_;
};

const char* kPalette[] = {"#4878a8", "#e0793d", "#58a066", "#c05555",
                          "#8967ad", "#a98b46", "#d579b5", "#6b6b6b"};

std::string short_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

struct AttackStats {
  double sr_min = 0.0, sr_max = 0.0, sr_mean = 0.0;
  double ssim_mean = 0.0;
};

// Per-attack aggregates in first-seen row order. SSIM repeats across targets
// of one (source, attack) pair, so it is deduplicated before averaging.
std::vector<std::pair<std::string, AttackStats>> aggregate(const ExperimentResults& r) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> srs;
  std::map<std::string, std::map<std::string, double>> ssims;  // attack -> source -> ssim
  for (const ResultRow& row : r.rows) {
    if (!srs.count(row.attack)) order.push_back(row.attack);
    srs[row.attack].push_back(row.sr);
    ssims[row.attack][row.source] = row.ssim;
  }
  std::vector<std::pair<std::string, AttackStats>> out;
  for (const auto& name : order) {
    AttackStats st;
    const auto& v = srs[name];
    st.sr_min = *std::min_element(v.begin(), v.end());
    st.sr_max = *std::max_element(v.begin(), v.end());
    for (double x : v) st.sr_mean += x;
    st.sr_mean /= static_cast<double>(v.size());
    for (const auto& [src, s] : ssims[name]) st.ssim_mean += s;
    st.ssim_mean /= static_cast<double>(ssims[name].size());
    out.emplace_back(name, st);
  }
  return out;
}

std::string render_sr_range(const ExperimentResults& r) {
  const auto stats = aggregate(r);
  const int w = 760, h = 380;
  const double left = 60, right = 20, top = 40, bottom = 60;
  Svg svg(w, h);
  svg.text(left, 22, "Attack success rate: min / mean / max over all model pairs", 14);

  double lo = 0.0, hi = 1.0;
  for (const auto& [name, st] : stats) {
    lo = std::min(lo, st.sr_min);
    hi = std::max(hi, st.sr_max);
  }
  const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
  auto ya = [&](double v) { return top + (hi - v) / span * (h - top - bottom); };

  for (double tick = std::ceil(lo * 4) / 4; tick <= hi + 1e-9; tick += 0.25) {
    svg.line(left, ya(tick), w - right, ya(tick), "#ddd");
    svg.text(left - 6, ya(tick) + 4, short_metric(tick), 10, "end");
  }
  svg.line(left, ya(0.0), w - right, ya(0.0), "#999");

  const double slot = (w - left - right) / static_cast<double>(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& [name, st] = stats[i];
    const double x = left + slot * (i + 0.5);
    const char* color = kPalette[i % 8];
    svg.line(x, ya(st.sr_min), x, ya(st.sr_max), color, 6.0);
    svg.line(x - 10, ya(st.sr_mean), x + 10, ya(st.sr_mean), "#222", 2.0);
    svg.text(x, h - bottom + 18, name, 12, "middle");
    svg.text(x, h - bottom + 34, short_metric(st.sr_mean), 10, "middle", "#666");
  }
  return svg.finish();
}

std::string render_miou_bars(const ExperimentResults& r) {
  // Bars grouped by attack, one bar per (source, target) cell.
  std::vector<std::string> attacks;
  std::vector<std::string> cells;  // "source>target"
  std::map<std::string, std::map<std::string, double>> value;  // attack -> cell -> miou
  for (const ResultRow& row : r.rows) {
    const std::string cell = row.source + " > " + row.target;
    if (!value.count(row.attack)) attacks.push_back(row.attack);
    if (std::find(cells.begin(), cells.end(), cell) == cells.end()) cells.push_back(cell);
    value[row.attack][cell] = row.miou;
  }

  const int w = 760, h = 420;
  const double left = 60, right = 20, top = 40, bottom = 110;
  Svg svg(w, h);
  svg.text(left, 22, "Adversarial mIoU per attack and model pair (lower is stronger)", 14);
  auto ya = [&](double v) { return top + (1.0 - v) * (h - top - bottom); };
  for (double tick = 0.0; tick <= 1.0 + 1e-9; tick += 0.25) {
    svg.line(left, ya(tick), w - right, ya(tick), "#ddd");
    svg.text(left - 6, ya(tick) + 4, short_metric(tick), 10, "end");
  }

  const double slot = (w - left - right) / static_cast<double>(attacks.size());
  const double bar = std::min(14.0, (slot - 12.0) / std::max<std::size_t>(cells.size(), 1));
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    const double x0 = left + slot * i + (slot - bar * cells.size()) / 2.0;
    for (std::size_t cidx = 0; cidx < cells.size(); ++cidx) {
      const auto it = value[attacks[i]].find(cells[cidx]);
      if (it == value[attacks[i]].end()) continue;
      const double v = it->second;
      svg.rect(x0 + bar * cidx, ya(v), bar - 1.0, ya(0.0) - ya(v), kPalette[cidx % 8]);
    }
    svg.text(left + slot * (i + 0.5), h - bottom + 16, attacks[i], 12, "middle");
  }

  double ly = h - bottom + 38;
  for (std::size_t cidx = 0; cidx < cells.size(); ++cidx) {
    const double lx = left + (cidx % 2) * 340;
    if (cidx > 0 && cidx % 2 == 0) ly += 18;
    svg.rect(lx, ly - 10, 12, 12, kPalette[cidx % 8]);
    svg.text(lx + 18, ly, cells[cidx], 11);
  }
  ly += 22;
  std::string clean = "clean mIoU:";
  for (const auto& [target, v] : r.clean_miou) clean += " " + target + "=" + short_metric(v);
  svg.text(left, ly, clean, 11, "start", "#666");
  return svg.finish();
}

std::string render_ssim_ranking(const ExperimentResults& r) {
  auto stats = aggregate(r);
  std::sort(stats.begin(), stats.end(), [](const auto& a, const auto& b) {
    return a.second.ssim_mean > b.second.ssim_mean;
  });
  const int w = 760;
  const int row_h = 30;
  const double left = 110, right = 70, top = 50;
  const int h = static_cast<int>(top) + row_h * static_cast<int>(stats.size()) + 20;
  Svg svg(w, h);
  svg.text(left, 22, "Mean SSIM of the perturbed images, best preserved first", 14);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& [name, st] = stats[i];
    const double y = top + row_h * i;
    const double len = std::max(0.0, st.ssim_mean) * (w - left - right);
    svg.rect(left, y, len, row_h - 10, kPalette[i % 8]);
    svg.text(left - 8, y + row_h / 2.0 + 1, name, 12, "end");
    svg.text(left + len + 6, y + row_h / 2.0 + 1, short_metric(st.ssim_mean), 11);
  }
  return svg.finish();
}

}  // namespace

std::string render_results_table(const ExperimentResults& results) {
  std::ostringstream out;
  out << "clean mIoU:";
  for (const auto& [target, v] : results.clean_miou) {
    out << "  " << target << "=" << format_metric(v);
  }
  out << "\n\n";

  const char* headers[] = {"source", "attack", "psnr", "ssim", "target", "miou", "sr"};
  std::vector<std::vector<std::string>> table;
  table.emplace_back(headers, headers + 7);
  for (const ResultRow& r : results.rows) {
    table.push_back({r.source, r.attack, format_metric(r.psnr), format_metric(r.ssim),
                     r.target, format_metric(r.miou), format_metric(r.sr)});
  }
  std::size_t width[7] = {0};
  for (const auto& row : table) {
    for (int c = 0; c < 7; ++c) width[c] = std::max(width[c], row[c].size());
  }
  for (const auto& row : table) {
    for (int c = 0; c < 7; ++c) {
      out << row[c];
      if (c < 6) out << std::string(width[c] - row[c].size() + 2, ' ');
    }
    out << "\n";
  }
  for (const auto& warning : results.warnings) {
    out << "warning: " << warning << "\n";
  }
  return out.str();
}

void write_report_charts(const ExperimentResults& results, const std::string& dir) {
  if (results.rows.empty()) {
    throw std::invalid_argument("report: result set has no rows");
  }
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_file((fs::path(dir) / "sr_range.svg").string(), render_sr_range(results));
  write_file((fs::path(dir) / "miou_bars.svg").string(), render_miou_bars(results));
  write_file((fs::path(dir) / "ssim_ranking.svg").string(), render_ssim_ranking(results));
}

}  // namespace segtransfer
