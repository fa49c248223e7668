/*
 * Copyright 2026 The Anchorfuse Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "anchorfuse/numeric/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/rng.hpp"

namespace anchorfuse::numeric {

namespace {

constexpr char kMagic[4] = {'A', 'F', 'P', 'S'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw CodecError(std::string("checkpoint truncated while reading ") + what, offset_ + in_.gcount());
    }
    offset_ += n;
  }

  std::uint64_t uint(std::size_t width, const char* what) {
    unsigned char b[8] = {};
    bytes(reinterpret_cast<char*>(b), width, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace

void ParamStore::add(const std::string& name, Array value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
}

void ParamStore::add_uniform(const std::string& name, Shape shape, std::size_t fan_in) {
  Rng rng(seed_ ^ fnv1a(name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = rng.uniform(-bound, bound);
  add(name, Array(std::move(shape), std::move(data)));
}

void ParamStore::add_mlp(const std::string& name, const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw DimensionError("add_mlp: need at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::string prefix = name + "." + std::to_string(i);
    add_uniform(prefix + ".weight", {widths[i], widths[i + 1]}, widths[i]);
    add_uniform(prefix + ".bias", {widths[i + 1]}, widths[i]);
  }
}

const Array& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return values_[it->second];
}

Array& ParamStore::get_mut(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return values_[it->second];
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::size_t ParamStore::mlp_depth(const std::string& name) const {
  std::size_t depth = 0;
  while (contains(name + "." + std::to_string(depth) + ".weight")) ++depth;
  return depth;
}

void ParamStore::fill(const std::string& prefix, double value) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].compare(0, prefix.size(), prefix) == 0) {
      for (double& v : values_[i].data()) v = value;
    }
  }
}

void ParamStore::save(std::ostream& out) const {
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(names_.size()));
  for (std::size_t i = 0; i < names_.size(); ++i) {
    put_u32(out, static_cast<std::uint32_t>(names_[i].size()));
    out.write(names_[i].data(), static_cast<std::streamsize>(names_[i].size()));
    const Array& v = values_[i];
    put_u32(out, static_cast<std::uint32_t>(v.rank()));
    for (std::size_t e : v.shape()) put_u64(out, e);
    for (double d : v.data()) put_u64(out, std::bit_cast<std::uint64_t>(d));
  }
}

void ParamStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save(out);
}

ParamStore ParamStore::load(std::istream& in) {
  Reader r(in);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw CodecError("bad checkpoint magic", 0);
  const auto version = r.uint(4, "version");
  if (version != kVersion) {
    throw CodecError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const auto count = r.uint(4, "tensor count");
  ParamStore store;
  for (std::uint64_t t = 0; t < count; ++t) {
    const auto len = r.uint(4, "name length");
    if (len > 4096) throw CodecError("implausible parameter name length", r.offset() - 4);
    std::string name(len, '\0');
    r.bytes(name.data(), len, "name");
    const auto rank = r.uint(4, "rank");
    if (rank > 8) throw CodecError("implausible tensor rank", r.offset() - 4);
    Shape shape(rank);
    for (auto& e : shape) e = r.uint(8, "extent");
    const std::size_t n = shape_size(shape);
    std::vector<double> data(n);
    for (double& d : data) d = std::bit_cast<double>(r.uint(8, "payload"));
    if (store.contains(name)) throw CodecError("duplicate parameter '" + name + "'", r.offset());
    store.add(name, Array(std::move(shape), std::move(data)));
  }
  return store;
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load(in);
}

bool ParamStore::operator==(const ParamStore& other) const {
  return names_ == other.names_ && values_ == other.values_;
}

Var mlp_forward(Tape& tape, const ParamStore& store, const std::string& name, Var x,
                Activation final) {
  const std::size_t depth = store.mlp_depth(name);
  if (depth == 0) throw std::out_of_range("unknown MLP '" + name + "'");
  for (std::size_t i = 0; i < depth; ++i) {
    const std::string prefix = name + "." + std::to_string(i);
    Var w = tape.param(store, prefix + ".weight");
    if (x.value().rank() != 2 || x.value().dim(1) != w.value().dim(0)) {
      throw DimensionError("MLP '" + name + "' layer " + std::to_string(i) + " expects width " +
                           std::to_string(w.value().dim(0)) + ", got " + shape_str(x.shape()));
    }
    x = add(matmul(x, w), tape.param(store, prefix + ".bias"));
    if (i + 1 < depth) {
      x = relu(x);
    } else if (final == Activation::kRelu) {
      x = relu(x);
    } else if (final == Activation::kSigmoid) {
      x = sigmoid(x);
    }
  }
  return x;
}

Array mlp_forward(const ParamStore& store, const std::string& name, const Array& x,
                  Activation final) {
  Tape tape;
  return mlp_forward(tape, store, name, tape.constant(x), final).value();
}

}  // namespace anchorfuse::numeric
