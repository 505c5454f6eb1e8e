#include "labtwin/digest.hpp"

#include "labtwin/error.hpp"

#include <openssl/evp.h>

#include <fmt/format.h>

#include <cstdio>
#include <vector>

namespace labtwin {

struct Sha256::Impl {
  EVP_MD_CTX *ctx = EVP_MD_CTX_new();
  ~Impl() { EVP_MD_CTX_free(ctx); }
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
  if (!impl_->ctx || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest init failed");
}

Sha256::~Sha256() = default;

Sha256 &Sha256::update(const void *data, std::size_t size) {
  if (EVP_DigestUpdate(impl_->ctx, data, size) != 1)
    throw Error("sha256: digest update failed");
  return *this;
}

std::string Sha256::hex_digest() {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(impl_->ctx, md, &len) != 1)
    throw Error("sha256: digest final failed");
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i)
    out += fmt::format("{:02x}", md[i]);
  return out;
}

std::string sha256_hex(std::string_view bytes) { return Sha256().update(bytes).hex_digest(); }

std::string sha256_file_hex(const std::filesystem::path &path) {
  std::FILE *f = std::fopen(path.c_str(), "rb");
  if (!f)
    throw IoError(fmt::format("cannot open {}", path.string()));
  Sha256 h;
  std::vector<char> buf(1 << 16);
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), f)) > 0)
    h.update(buf.data(), n);
  std::fclose(f);
  return h.hex_digest();
}

} // namespace labtwin
