#pragma once

// PAVT1 tensor files: the 5-byte magic "PAVT1", u32 rank, rank x u32 extents,
// then the payload as little-endian IEEE-754 doubles in row-major order. A
// file may hold several tensors back to back.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "proxavg/tensor.hpp"

namespace proxavg {

inline constexpr std::array<char, 5> kTensorMagic = {'P', 'A', 'V', 'T', '1'};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b, 4);
}

inline void put_f64(std::ostream& os, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  os.write(b, 8);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("PAVT1: truncated header");
  }
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t) {
  if (t.empty()) throw std::invalid_argument("write_tensor: empty tensor");
  os.write(kTensorMagic.data(), kTensorMagic.size());
  detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) detail::put_u32(os, static_cast<std::uint32_t>(e));
  for (double v : t.data()) detail::put_f64(os, v);
  if (!os) throw std::runtime_error("write_tensor: stream failure");
}

inline Tensor read_tensor(std::istream& is) {
  std::array<char, 5> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kTensorMagic) {
    throw std::runtime_error("PAVT1: bad magic");
  }
  const std::uint32_t rank = detail::get_u32(is);
  if (rank == 0 || rank > 8) {
    throw std::runtime_error("PAVT1: unsupported rank " + std::to_string(rank));
  }
  Shape shape(rank);
  for (auto& e : shape) {
    e = detail::get_u32(is);
    if (e == 0) throw std::runtime_error("PAVT1: zero extent");
  }
  const std::size_t count = shape_volume(shape);
  std::vector<unsigned char> raw(count * 8);
  if (!is.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size()))) {
    throw std::runtime_error("PAVT1: truncated payload");
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) bits = (bits << 8) | raw[i * 8 + b];
    data[i] = std::bit_cast<double>(bits);
  }
  return Tensor(std::move(shape), std::move(data));
}

inline void save_tensors(const std::filesystem::path& path,
                         const std::vector<Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const Tensor& t : tensors) write_tensor(os, t);
}

inline std::vector<Tensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<Tensor> out;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_tensor(is));
  return out;
}

}  // namespace proxavg
