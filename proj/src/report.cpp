#include "vtagent/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace vtagent {

namespace {

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string signed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::vector<std::string> split_order(const std::vector<SystemReports>& systems) {
  std::vector<std::string> order;
  for (const auto& sys : systems)
    for (const auto& r : sys.reports)
      if (std::find(order.begin(), order.end(), r.split_tag) == order.end())
        order.push_back(r.split_tag);
  // Keep the overall row last.
  auto all = std::find(order.begin(), order.end(), "all");
  if (all != order.end()) {
    order.erase(all);
    order.push_back("all");
  }
  return order;
}

const MetricReport* find_split(const SystemReports& sys, const std::string& tag) {
  for (const auto& r : sys.reports)
    if (r.split_tag == tag) return &r;
  return nullptr;
}

}  // namespace

std::string format_comparison_table(const std::vector<SystemReports>& systems) {
  std::vector<std::string> header = {"Split"};
  for (const auto& sys : systems) {
    header.push_back(sys.name + " ACC.");
    header.push_back(sys.name + " ANLS");
  }
  for (std::size_t k = 1; k < systems.size(); ++k) {
    header.push_back("Δ" + (systems.size() > 2 ? std::string(" ") + systems[k].name : "") + " ACC.");
    header.push_back("Δ" + (systems.size() > 2 ? std::string(" ") + systems[k].name : "") + " ANLS");
  }

  std::vector<std::vector<std::string>> rows;
  for (const auto& tag : split_order(systems)) {
    std::vector<std::string> row = {tag};
    const MetricReport* base = systems.empty() ? nullptr : find_split(systems.front(), tag);
    for (const auto& sys : systems) {
      const MetricReport* r = find_split(sys, tag);
      row.push_back(r ? fmt2(r->mean_accuracy) : "-");
      row.push_back(r ? fmt2(r->mean_anls) : "-");
    }
    for (std::size_t k = 1; k < systems.size(); ++k) {
      const MetricReport* r = find_split(systems[k], tag);
      row.push_back(r && base ? signed2(r->mean_accuracy - base->mean_accuracy) : "-");
      row.push_back(r && base ? signed2(r->mean_anls - base->mean_anls) : "-");
    }
    rows.push_back(std::move(row));
  }

  // Display width counts code points so the delta sign lines up.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    widths[c] = width(header[c]);
    for (const auto& row : rows) widths[c] = std::max(widths[c], width(row[c]));
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::size_t pad = widths[c] - width(cells[c]);
      if (c == 0) os << cells[c] << std::string(pad, ' ');
      else os << "  " << std::string(pad, ' ') << cells[c];
    }
    os << '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  return os.str();
}

std::string format_comparison_csv(const std::vector<SystemReports>& systems) {
  std::ostringstream os;
  os << "split,system,n,accuracy,anls,delta_accuracy,delta_anls\n";
  for (const auto& tag : split_order(systems)) {
    const MetricReport* base = systems.empty() ? nullptr : find_split(systems.front(), tag);
    for (std::size_t k = 0; k < systems.size(); ++k) {
      const MetricReport* r = find_split(systems[k], tag);
      if (!r) continue;
      os << tag << ',' << systems[k].name << ',' << r->n << ',' << fmt2(r->mean_accuracy) << ','
         << fmt2(r->mean_anls) << ',';
      if (k > 0 && base)
        os << fmt2(r->mean_accuracy - base->mean_accuracy) << ','
           << fmt2(r->mean_anls - base->mean_anls);
      else
        os << ',';
      os << '\n';
    }
  }
  return os.str();
}

std::string svg_line_plot(const std::string& title, const std::vector<Series>& series,
                          const std::string& x_label, const std::string& y_label) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (first) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        first = false;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  y0 = std::min(y0, 0.0);
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "font-family=\"sans-serif\" font-size=\"12\">\n",
                W, H);
  os << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">",
                W / 2);
  os << buf << xml_escape(title) << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n"
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                L, H - B, W - R, H - B, L, T, L, H - B);
  os << buf;
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0;
    const double xv = x0 + (x1 - x0) * k / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.2f</text>\n"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.0f</text>\n",
                  L - 6, py(yv) + 4, yv, px(xv), H - B + 18, xv);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"%.0f\" text-anchor=\"middle\">", W / 2,
                H - 12);
  os << buf << xml_escape(x_label) << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<text x=\"16\" y=\"%.0f\" text-anchor=\"middle\" transform=\"rotate(-90 16 %.0f)\">",
                H / 2, H / 2);
  os << buf << xml_escape(y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.1f,%.1f", i ? " " : "", px(s.x[i]), py(s.y[i]));
      os << buf;
    }
    os << "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" fill=\"%s\">", W - R - 140,
                  T + 16.0 * static_cast<double>(k + 1), color);
    os << buf << xml_escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_bar_chart(const std::string& title, const std::vector<BarGroup>& groups,
                          const std::string& y_label) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
  double ymax = 0;
  std::vector<std::string> names;
  for (const auto& g : groups)
    for (const auto& [name, v] : g.bars) {
      ymax = std::max(ymax, v);
      if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    }
  if (ymax <= 0) ymax = 1;
  const double group_w = (W - L - R) / static_cast<double>(std::max<std::size_t>(groups.size(), 1));
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(names.size(), 1));

  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "font-family=\"sans-serif\" font-size=\"12\">\n",
                W, H);
  os << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">",
                W / 2);
  os << buf << xml_escape(title) << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L,
                H - B, W - R, H - B);
  os << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"16\" y=\"%.0f\" text-anchor=\"middle\" transform=\"rotate(-90 16 %.0f)\">",
                H / 2, H / 2);
  os << buf << xml_escape(y_label) << "</text>\n";

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const double gx = L + group_w * static_cast<double>(gi) + group_w * 0.1;
    for (const auto& [name, v] : groups[gi].bars) {
      const auto k = static_cast<std::size_t>(
          std::find(names.begin(), names.end(), name) - names.begin());
      const double h = v / ymax * (H - T - B);
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\"/>\n"
                    "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-size=\"10\">%.2f</text>\n",
                    gx + bar_w * static_cast<double>(k), H - B - h, bar_w * 0.95, h,
                    kPalette[k % std::size(kPalette)], gx + bar_w * (static_cast<double>(k) + 0.5),
                    H - B - h - 4, v);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">",
                  gx + group_w * 0.4, H - B + 18);
    os << buf << xml_escape(groups[gi].label) << "</text>\n";
  }
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" fill=\"%s\">", W - R - 140,
                  T + 16.0 * static_cast<double>(k + 1), kPalette[k % std::size(kPalette)]);
    os << buf << xml_escape(names[k]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_learning_curve(const grpo::LearningCurve& curve) {
  Series reward{"mean reward", {}, {}}, tool{"tool rate", {}, {}}, acc{"accuracy", {}, {}};
  for (const auto& p : curve.points) {
    reward.x.push_back(p.step);
    reward.y.push_back(p.mean_reward);
    tool.x.push_back(p.step);
    tool.y.push_back(p.tool_rate);
    acc.x.push_back(p.step);
    acc.y.push_back(p.mean_accuracy);
  }
  return svg_line_plot("GRPO toy policy", {reward, acc, tool}, "step", "value");
}

}  // namespace vtagent
