#pragma once

#include <string>

#include "nis/cascade.hpp"

namespace nis {

/// "NISW" weight file: magic, u32 version 1, u32 module count, then for every
/// conv layer u32 c_out, c_in, f followed by weights and biases as
/// little-endian f64 (re, im) pairs. Module specs are recovered from the layer
/// shapes; the residual flag is not stored and loads as false.
void save_weights(const CascadeModel& model, const std::string& path);
CascadeModel load_weights(const std::string& path);

std::string encode_weights(const CascadeModel& model);
CascadeModel decode_weights(const std::string& bytes);

}  // namespace nis
