// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Fixed-endianness byte encoding shared by the dataset cache, the IDX reader
// and model checkpoints.

#ifndef CRUST_SRC_BINARY_IO_H_
#define CRUST_SRC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "crust/error.h"

namespace crust::internal {

class ByteWriter {
 public:
  void Bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void U8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void U32Le(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) U8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void U64Le(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) U8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void F64Le(double v) { U64Le(std::bit_cast<std::uint64_t>(v)); }

  const std::vector<char>& buffer() const { return buf_; }

  void WriteTo(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error(ErrorCode::kIoError, "short write to " + path.string());
  }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> bytes, std::string name)
      : bytes_(std::move(bytes)), name_(std::move(name)) {}

  static ByteReader FromFile(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    return ByteReader(std::move(bytes), path.string());
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void Need(std::size_t n) const {
    if (remaining() < n) {
      throw Error(ErrorCode::kTruncatedFile,
                  name_ + ": need " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ", have " +
                      std::to_string(remaining()));
    }
  }

  std::string Bytes(std::size_t n) {
    Need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t U8() {
    Need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t U32Be() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | U8();
    return v;
  }
  std::uint32_t U32Le() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(U8()) << (8 * i);
    return v;
  }
  std::uint64_t U64Le() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(U8()) << (8 * i);
    return v;
  }
  double F64Le() { return std::bit_cast<double>(U64Le()); }

  const std::string& name() const { return name_; }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
  std::string name_;
};

}  // namespace crust::internal

#endif  // CRUST_SRC_BINARY_IO_H_
