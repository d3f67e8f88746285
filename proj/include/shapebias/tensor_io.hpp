#pragma once

#include <cstdio>
#include <string>

#include "shapebias/tensor.hpp"

namespace shapebias {

// NDT1 tensor file: magic "NDT1", 1-byte dtype code (0 = f64, 1 = f32),
// 1-byte rank, rank x 8-byte little-endian dims, row-major payload (LE).
enum class Dtype : uint8_t { f64 = 0, f32 = 1 };

void save_ndt(const std::string& path, const Tensor& t, Dtype dtype = Dtype::f64);
void save_ndt(const std::string& path, const TensorF& t);

// Loads either dtype; f32 payloads are widened.
Tensor load_ndt(const std::string& path);
TensorF load_ndt_f32(const std::string& path);

Dtype peek_ndt_dtype(const std::string& path);

// Byte-stable decimal formatting used by every CSV/text emitter.
std::string format_double(double v);

} // namespace shapebias
