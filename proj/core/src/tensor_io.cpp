#include "trajtok/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace trajtok {

namespace {

constexpr char kMagic[4] = {'T', 'R', 'O', 'K'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  if (tensor.empty()) raise(ErrorCode::InvalidShape, "cannot write empty tensor to " + path.string());
  tensor.ensure_finite("tensor payload");
  if (tensor.rank() > 255) raise(ErrorCode::InvalidShape, "rank exceeds container limit");

  std::string buf;
  buf.reserve(10 + 8 * tensor.rank() + 4 * tensor.size());
  buf.append(kMagic, 4);
  put_u32(buf, kTensorFormatVersion);
  buf.push_back(static_cast<char>(kTensorDtypeF32));
  buf.push_back(static_cast<char>(tensor.rank()));
  for (std::size_t d : tensor.shape()) put_u64(buf, d);
  for (std::size_t i = 0; i < tensor.size(); ++i) put_u32(buf, std::bit_cast<std::uint32_t>(tensor[i]));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot open for write: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) raise(ErrorCode::IoError, "short write: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open for read: " + path.string());

  unsigned char header[10];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (in.gcount() != sizeof(header)) raise(ErrorCode::TruncatedPayload, "header short in " + path.string());
  if (std::memcmp(header, kMagic, 4) != 0) raise(ErrorCode::BadMagic, path.string());
  const std::uint32_t version = get_u32(header + 4);
  if (version != kTensorFormatVersion)
    raise(ErrorCode::UnsupportedVersion, "version " + std::to_string(version) + " in " + path.string());
  const std::uint8_t dtype = header[8];
  if (dtype != kTensorDtypeF32)
    raise(ErrorCode::ParseError, "unsupported dtype code " + std::to_string(dtype) + " in " + path.string());
  const std::size_t rank = header[9];
  if (rank == 0) raise(ErrorCode::InvalidShape, "rank 0 in " + path.string());

  std::vector<unsigned char> dims(8 * rank);
  in.read(reinterpret_cast<char*>(dims.data()), static_cast<std::streamsize>(dims.size()));
  if (static_cast<std::size_t>(in.gcount()) != dims.size())
    raise(ErrorCode::TruncatedPayload, "dims short in " + path.string());

  std::vector<std::size_t> shape(rank);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::uint64_t d = get_u64(dims.data() + 8 * i);
    if (d == 0) raise(ErrorCode::InvalidShape, "zero dimension in " + path.string());
    shape[i] = static_cast<std::size_t>(d);
    if (shape[i] > std::size_t(-1) / count) raise(ErrorCode::InvalidShape, "shape overflow in " + path.string());
    count *= shape[i];
  }

  std::vector<unsigned char> payload(4 * count);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size())
    raise(ErrorCode::TruncatedPayload, "payload short in " + path.string());

  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i)
    data[i] = std::bit_cast<float>(get_u32(payload.data() + 4 * i));

  Tensor t(std::move(shape), std::move(data));
  t.ensure_finite("tensor payload");
  return t;
}

}  // namespace trajtok
