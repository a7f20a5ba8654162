#pragma once

#include <cstdint>
#include <filesystem>

#include "trajtok/tensor.hpp"

namespace trajtok {

// "TROK" container, version 1:
//   magic   4 bytes  'T','R','O','K'
//   version u32 LE   = 1
//   dtype   u8       = 1 (f32)
//   rank    u8
//   dims    rank * u64 LE
//   payload f32 LE, row-major
// Always little-endian, independent of host byte order.
inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint8_t kTensorDtypeF32 = 1;

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace trajtok
