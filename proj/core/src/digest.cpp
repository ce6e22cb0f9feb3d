// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/digest.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <stdexcept>

namespace fm3 {

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (ctx_ == nullptr || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 initialisation failed");
  }
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

void Sha256::update(std::span<const std::uint8_t> bytes) {
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), bytes.data(), bytes.size());
}

Digest Sha256::finish() {
  Digest d{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), d.data(), &len);
  return d;
}

Digest sha256(std::span<const std::uint8_t> bytes) {
  Sha256 h;
  h.update(bytes);
  return h.finish();
}

std::string to_hex(const Digest& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : d) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xF]);
  }
  return s;
}

Digest digest_tensors(const std::map<std::string, Tensor>& tensors) {
  static_assert(std::endian::native == std::endian::little, "digest assumes a little-endian host");
  Sha256 h;
  auto feed_u64 = [&](std::uint64_t v) {
    h.update(std::span(reinterpret_cast<const std::uint8_t*>(&v), sizeof v));
  };
  for (const auto& [name, t] : tensors) {
    feed_u64(name.size());
    h.update(std::span(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()));
    feed_u64(t.rank());
    for (auto e : t.shape()) feed_u64(e);
    h.update(std::span(reinterpret_cast<const std::uint8_t*>(t.data().data()), t.size() * sizeof(double)));
  }
  return h.finish();
}

}  // namespace fm3
