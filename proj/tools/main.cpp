// SPDX-License-Identifier: Apache-2.0
#include <torch/torch.h>

#include "diffrect/cli.hpp"

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  return diffrect::cli::run(argc, argv);
}
