#include "manifest.h"

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace sotkit::cli {

std::string Sha256File(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("{}: cannot open", path.string()));
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                             &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 init failed");
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0)
      EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md;
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

void RunManifest::AddInput(const std::filesystem::path& path) {
  inputs.emplace_back(path.string(), Sha256File(path));
}

void RunManifest::AddOutput(const std::filesystem::path& path) {
  outputs.push_back(path.string());
}

void RunManifest::Write(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["tool"] = "sotkit";
  j["tool_version"] = tool_version;
  j["command_line"] = command_line;
  j["seeds"] = seeds;
  j["inputs"] = nlohmann::json::array();
  for (const auto& [p, digest] : inputs)
    j["inputs"].push_back({{"path", p}, {"sha256", digest}});
  j["outputs"] = nlohmann::json::array();
  for (const auto& p : outputs)
    j["outputs"].push_back({{"path", p}, {"sha256", Sha256File(p)}});
  if (!stages.empty()) j["stages"] = stages;
  j["created_utc"] = fmt::format(
      "{:%Y-%m-%dT%H:%M:%SZ}",
      std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("{}: cannot write", path.string()));
  out << j.dump(2) << "\n";
}

}  // namespace sotkit::cli
