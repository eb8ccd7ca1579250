// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace smp::wire {

// Little-endian primitives shared by the dataset and checkpoint formats.
// Encoding is explicit byte shuffling, so files are portable across hosts
// and round-trips are bitwise exact.

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_i64(std::string& out, std::int64_t v) {
  put_u64(out, static_cast<std::uint64_t>(v));
}

inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  Reader(const std::string& data, std::size_t offset = 0) : data_(data), off_(offset) {}

  std::uint64_t u64() {
    require(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[off_ + i])) << (8 * i);
    }
    off_ += 8;
    return v;
  }

  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::size_t offset() const { return off_; }
  bool exhausted() const { return off_ == data_.size(); }

  void require(std::size_t n) const {
    if (off_ + n > data_.size()) {
      throw std::runtime_error("truncated input: need " + std::to_string(n) + " bytes at offset " +
                               std::to_string(off_) + " of " + std::to_string(data_.size()));
    }
  }

 private:
  const std::string& data_;
  std::size_t off_ = 0;
};

}  // namespace smp::wire
