// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace diffrect {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;  // 1-based source line of each row
};

/// Comma-separated file with a header line. A row whose field count differs
/// from the header raises ParseError naming the line.
CsvTable read_csv(const std::filesystem::path& path);

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::array<std::uint8_t, 3> color{0, 0, 0};
};

/// Line chart on a white canvas with an axis frame; ranges fit the data.
void render_chart(const std::filesystem::path& path, const std::vector<Series>& series, int width = 640,
                  int height = 400);

/// Writes loss.png (one line per loss term) and dice.png (mean and per-class
/// validation Dice) from a training run directory.
void plot_run(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

}  // namespace diffrect
