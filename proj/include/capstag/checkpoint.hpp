#pragma once

#include <string>

#include "capstag/model.hpp"

namespace capstag {

// Directory layout: a text `manifest` (version, config, labels, vocabulary,
// tensor name -> shape table) plus one raw binary file per tensor holding
// 32-bit little-endian floats in row-major order.
void save_checkpoint(Model& model, const std::string& dir);
Model load_checkpoint(const std::string& dir);

}  // namespace capstag
