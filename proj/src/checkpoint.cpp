// SPDX-License-Identifier: Apache-2.0
#include "fassl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "fassl/errors.hpp"

namespace fassl::checkpoint {
namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> to_bytes(const ParamTree& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params.entries()) {
    if (name.size() > UINT16_MAX) throw ContractError("parameter name too long: " + name);
    if (t.rank() > UINT8_MAX) throw ContractError("tensor rank too large: " + name);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ParamTree from_bytes(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.get_string(4) != std::string(kMagic, 4)) throw std::runtime_error("bad checkpoint magic");
  const auto version = r.get_le<std::uint16_t>();
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get_le<std::uint32_t>();
  std::vector<ParamTree::Entry> entries;
  entries.reserve(count);
  std::string prev;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string name = r.get_string(r.get_le<std::uint16_t>());
    if (e > 0 && !(prev < name)) throw std::runtime_error("checkpoint entries not in canonical order");
    const auto rank = r.get_le<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get_le<std::uint32_t>();
    std::vector<double> data(numel(shape));
    for (auto& v : data) v = std::bit_cast<double>(r.get_le<std::uint64_t>());
    prev = name;
    entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint");
  return ParamTree(std::move(entries));
}

void save(const ParamTree& params, const std::filesystem::path& path) {
  const auto bytes = to_bytes(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

ParamTree load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_bytes(bytes);
}

}  // namespace fassl::checkpoint
