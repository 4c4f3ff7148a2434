// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "lesionaid/csv.hpp"

namespace lesionaid {

namespace {

constexpr std::array<std::uint8_t, 3> kBlue{31, 119, 180};
constexpr std::array<std::uint8_t, 3> kOrange{255, 127, 14};
constexpr std::array<std::uint8_t, 3> kGreen{44, 160, 44};
constexpr std::array<std::uint8_t, 3> kAxis{60, 60, 60};
constexpr std::size_t kMargin = 20;

class Canvas {
 public:
  Canvas(std::size_t w, std::size_t h) : image_(h, w, 3, 1.0f) {}

  void pixel(long x, long y, const std::array<std::uint8_t, 3>& c) {
    if (x < 0 || y < 0 || x >= static_cast<long>(image_.width) || y >= static_cast<long>(image_.height)) return;
    for (std::size_t k = 0; k < 3; ++k) {
      image_.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), k) = static_cast<float>(c[k]) / 255.0f;
    }
  }

  void line(long x0, long y0, long x1, long y1, const std::array<std::uint8_t, 3>& c) {
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    while (true) {
      pixel(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void marker(long x, long y, const std::array<std::uint8_t, 3>& c) {
    for (long i = -2; i <= 2; ++i)
      for (long j = -2; j <= 2; ++j) pixel(x + i, y + j, c);
  }

  const Image& image() const { return image_; }

 private:
  Image image_;
};

void draw_panel(Canvas& canvas, std::size_t x0, std::size_t width, std::size_t height,
                const std::vector<Series>& series) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (double v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
    for (double v : s.y) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;

  const long left = static_cast<long>(x0 + kMargin), right = static_cast<long>(x0 + width - kMargin / 2);
  const long top = static_cast<long>(kMargin / 2), bottom = static_cast<long>(height - kMargin);
  canvas.line(left, bottom, right, bottom, kAxis);
  canvas.line(left, top, left, bottom, kAxis);
  auto px = [&](double x) {
    return left + std::lround((x - xmin) / (xmax - xmin) * static_cast<double>(right - left));
  };
  auto py = [&](double y) {
    return bottom - std::lround((y - ymin) / (ymax - ymin) * static_cast<double>(bottom - top));
  };
  for (const auto& s : series) {
    const std::size_t n = std::min(s.x.size(), s.y.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) canvas.line(px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), s.color);
      if (n <= 60) canvas.marker(px(s.x[i]), py(s.y[i]), s.color);
    }
  }
}

}  // namespace

void render_panels(const std::filesystem::path& png, const std::vector<std::vector<Series>>& panels,
                   std::size_t panel_width, std::size_t panel_height) {
  if (panels.empty()) throw ConfigError("nothing to plot");
  Canvas canvas(panel_width * panels.size(), panel_height);
  for (std::size_t i = 0; i < panels.size(); ++i) draw_panel(canvas, i * panel_width, panel_width, panel_height, panels[i]);
  write_png(png, canvas.image());
}

void render_training_curves(const TrainReport& report, const std::filesystem::path& png) {
  Series tl{{}, {}, kBlue}, vl{{}, {}, kOrange}, ta{{}, {}, kBlue}, va{{}, {}, kOrange};
  for (const auto& e : report.epochs) {
    const double x = static_cast<double>(e.epoch);
    tl.x.push_back(x);
    tl.y.push_back(e.train_loss);
    ta.x.push_back(x);
    ta.y.push_back(e.train_acc);
    if (e.has_val) {
      vl.x.push_back(x);
      vl.y.push_back(e.val_loss);
      va.x.push_back(x);
      va.y.push_back(e.val_acc);
    }
  }
  std::vector<Series> loss{tl}, acc{ta};
  if (!vl.x.empty()) {
    loss.push_back(vl);
    acc.push_back(va);
  }
  render_panels(png, {loss, acc});
}

RunSummary report_run(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir) {
  if (!std::filesystem::is_directory(run_dir)) throw DatasetError("no data: '" + run_dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> csvs;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") csvs.push_back(entry.path());
  }
  std::sort(csvs.begin(), csvs.end());
  std::filesystem::create_directories(out_dir);

  RunSummary summary;
  std::ostringstream text;
  std::ostringstream fid_rows;
  bool any = false;
  for (const auto& path : csvs) {
    const CsvTable t = read_csv(path);
    const std::string name = path.filename().string();
    if (t.column("epoch") >= 0 && t.column("train_loss") >= 0) {
      const TrainReport r = TrainReport::read_csv(path);
      if (r.epochs.empty()) {
        summary.warnings.push_back(name + ": no epochs recorded");
        continue;
      }
      const bool has_val = std::any_of(r.epochs.begin(), r.epochs.end(), [](const auto& e) { return e.has_val; });
      if (!has_val) summary.warnings.push_back(name + ": no validation columns, plotting train only");
      const auto png = out_dir / (path.stem().string() + "_curves.png");
      render_training_curves(r, png);
      summary.images.push_back(png);
      text << "training report " << name << '\n';
      text << "  epoch  train_loss  train_acc  val_loss  val_acc\n";
      for (const auto& e : r.epochs) {
        char line[128];
        if (e.has_val) {
          std::snprintf(line, sizeof line, "  %5zu  %10.4f  %9.4f  %8.4f  %7.4f\n", e.epoch, e.train_loss, e.train_acc,
                        e.val_loss, e.val_acc);
        } else {
          std::snprintf(line, sizeof line, "  %5zu  %10.4f  %9.4f  %8s  %7s\n", e.epoch, e.train_loss, e.train_acc, "-",
                        "-");
        }
        text << line;
      }
      any = true;
    } else if (t.column("step") >= 0 && t.column("d_loss") >= 0) {
      const int sc = t.column("step"), dc = t.column("d_loss"), gc = t.column("g_loss"), ac = t.column("d_acc");
      Series d{{}, {}, kBlue}, g{{}, {}, kOrange}, a{{}, {}, kGreen};
      for (const auto& row : t.rows) {
        auto val = [&](int c) { return c >= 0 && c < static_cast<int>(row.size()) && !row[c].empty() ? std::stod(row[c]) : 0.0; };
        const double x = val(sc);
        d.x.push_back(x), d.y.push_back(val(dc));
        g.x.push_back(x), g.y.push_back(val(gc));
        a.x.push_back(x), a.y.push_back(val(ac));
      }
      if (d.x.empty()) {
        summary.warnings.push_back(name + ": no steps recorded");
        continue;
      }
      const auto png = out_dir / (path.stem().string() + "_curves.png");
      render_panels(png, {{d, g}, {a}});
      summary.images.push_back(png);
      char line[160];
      std::snprintf(line, sizeof line, "gan log %s: %zu steps, final d_loss %.4f g_loss %.4f d_acc %.4f\n",
                    name.c_str(), d.x.size(), d.y.back(), g.y.back(), a.y.back());
      text << line;
      any = true;
    } else if (t.column("fid") >= 0) {
      const int rc = t.column("real_dir"), fc = t.column("fake_dir"), ec = t.column("extractor"), fi = t.column("fid");
      for (const auto& row : t.rows) {
        auto cell = [&](int c) { return c >= 0 && c < static_cast<int>(row.size()) ? row[c] : std::string(); };
        fid_rows << "  " << cell(rc) << "  " << cell(fc) << "  " << cell(ec) << "  " << cell(fi) << '\n';
        any = true;
      }
    }
  }
  if (!fid_rows.str().empty()) text << "fid (real  fake  extractor  value)\n" << fid_rows.str();
  if (!any) throw DatasetError("no data: no training, GAN or FID CSVs in '" + run_dir.string() + "'");
  for (const auto& w : summary.warnings) text << "warning: " << w << '\n';
  summary.text = text.str();
  std::ofstream os(out_dir / "summary.txt", std::ios::trunc);
  os << summary.text;
  return summary;
}

}  // namespace lesionaid
