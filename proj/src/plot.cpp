// SPDX-License-Identifier: Apache-2.0
#include "diffrect/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "diffrect/errors.hpp"
#include "diffrect/png_io.hpp"

namespace diffrect {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const fs::path& path, int line, const std::string& text) {
  double v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ParseError(path, "line " + std::to_string(line) + ": not a number: '" + text + "'");
  return v;
}

std::size_t column(const CsvTable& t, const fs::path& path, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw ParseError(path, "line 1: missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette{{{31, 119, 180},
                                                               {255, 127, 14},
                                                               {44, 160, 44},
                                                               {214, 39, 40},
                                                               {148, 103, 189},
                                                               {140, 86, 75},
                                                               {227, 119, 194},
                                                               {127, 127, 127}}};

}  // namespace

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open");
  CsvTable t;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (n == 1) {
      t.header = split_fields(line);
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != t.header.size())
      throw ParseError(path, "line " + std::to_string(n) + ": expected " + std::to_string(t.header.size()) +
                                 " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(n);
  }
  if (n == 0) throw ParseError(path, "line 1: empty file");
  return t;
}

void render_chart(const fs::path& path, const std::vector<Series>& series, int width, int height) {
  require(width >= 64 && height >= 64, "render_chart: canvas too small");
  png::Rgb8 img{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3, 255)};
  auto put = [&](int x, int y, const std::array<std::uint8_t, 3>& c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    auto* p = &img.rgb[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  };
  auto line = [&](int x0, int y0, int x1, int y1, const std::array<std::uint8_t, 3>& c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      put(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  };

  const int left = 40, right = width - 16, top = 16, bottom = height - 32;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  const std::array<std::uint8_t, 3> grid{225, 225, 225}, axis{0, 0, 0};
  for (int k = 1; k < 5; ++k) {
    const int y = top + (bottom - top) * k / 5;
    const int x = left + (right - left) * k / 5;
    line(left, y, right, y, grid);
    line(x, top, x, bottom, grid);
  }
  line(left, top, left, bottom, axis);
  line(left, bottom, right, bottom, axis);
  line(left, top, right, top, axis);
  line(right, top, right, bottom, axis);

  auto px = [&](double x) { return left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (right - left))); };
  auto py = [&](double y) {
    return bottom - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (bottom - top)));
  };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i == 0)
        put(px(s.x[0]), py(s.y[0]), s.color);
      else
        line(px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), s.color);
    }
  }
  png::write_rgb8(path, img);
}

void plot_run(const fs::path& run_dir, const fs::path& out_dir) {
  const auto losses_path = run_dir / "losses.csv";
  const auto metrics_path = run_dir / "metrics.csv";
  if (!fs::is_regular_file(losses_path)) throw IoError(losses_path, "missing");
  if (!fs::is_regular_file(metrics_path)) throw IoError(metrics_path, "missing");
  const auto losses = read_csv(losses_path);
  const auto metrics = read_csv(metrics_path);

  std::vector<Series> loss_series;
  const auto iter_col = column(losses, losses_path, "iter");
  std::size_t colour = 0;
  for (const char* name : {"total", "seg_semi", "rect", "lat_semi", "lat_u", "lat_l"}) {
    const auto c = column(losses, losses_path, name);
    Series s;
    s.color = kPalette[colour++ % kPalette.size()];
    for (std::size_t r = 0; r < losses.rows.size(); ++r) {
      s.x.push_back(parse_number(losses_path, losses.line_numbers[r], losses.rows[r][iter_col]));
      s.y.push_back(parse_number(losses_path, losses.line_numbers[r], losses.rows[r][c]));
    }
    loss_series.push_back(std::move(s));
  }

  const auto m_iter = column(metrics, metrics_path, "iter");
  const auto m_class = column(metrics, metrics_path, "class");
  const auto m_dice = column(metrics, metrics_path, "dice");
  std::map<std::string, Series> by_class;
  for (std::size_t r = 0; r < metrics.rows.size(); ++r) {
    const int ln = metrics.line_numbers[r];
    auto& s = by_class[metrics.rows[r][m_class]];
    s.x.push_back(parse_number(metrics_path, ln, metrics.rows[r][m_iter]));
    s.y.push_back(parse_number(metrics_path, ln, metrics.rows[r][m_dice]));
  }
  std::vector<Series> dice_series;
  colour = 1;
  for (auto& [name, s] : by_class) {
    if (name == "mean") continue;
    s.color = kPalette[colour++ % kPalette.size()];
    dice_series.push_back(s);
  }
  if (auto it = by_class.find("mean"); it != by_class.end()) {
    it->second.color = {0, 0, 0};
    dice_series.push_back(it->second);
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir, "cannot create output directory: " + ec.message());
  render_chart(out_dir / "loss.png", loss_series);
  render_chart(out_dir / "dice.png", dice_series);
}

}  // namespace diffrect
