// SPDX-License-Identifier: Apache-2.0
// torch's logging shim defines CHECK too; pulling it in first lets doctest's win.
#pragma once
#include <torch/torch.h>
#include <doctest.h>
