#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "cpr/tensor.hpp"

namespace cpr {

// NPY v1.0 interchange. Files are written as little-endian f32, C order, with
// the header padded so the data starts on a 64-byte boundary. Reading accepts
// '<f4' and '<f8' (f64 is narrowed to f32 with round-to-nearest-even); big-endian,
// integer and Fortran-ordered arrays are rejected.

/// Encodes a tensor as the bytes of an NPY file.
std::string encode_npy(const Tensor& t);

/// Decodes NPY bytes. `source` names the input in error messages.
Tensor decode_npy(std::string_view bytes, std::string_view source = "<memory>");

Tensor load_tensor(const std::filesystem::path& path);
void save_tensor(const Tensor& t, const std::filesystem::path& path);

}  // namespace cpr
