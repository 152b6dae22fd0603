// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/model/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "tokreg/errors.hpp"

namespace tokreg::model {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in native order; big-endian hosts need swapping");

constexpr std::array<char, 8> kMagic = {'T', 'O', 'K', 'R', 'E', 'G', 'C', '1'};
constexpr int kFormatVersion = 1;

void write_tensors(std::ofstream& out, const std::vector<NamedTensor>& tensors) {
  for (const auto& t : tensors) {
    out.write(reinterpret_cast<const char*>(t.tensor.raw()),
              static_cast<std::streamsize>(t.tensor.size() * sizeof(double)));
  }
}

}  // namespace

TransformerLM Checkpoint::to_model() const { return TransformerLM(config, params, role); }

Checkpoint make_checkpoint(const TransformerLM& model) {
  Checkpoint c;
  c.config = model.config();
  c.role = model.role();
  c.params = model.parameters();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json table = nlohmann::json::array();
  auto describe = [&table](const std::vector<NamedTensor>& tensors, const char* group) {
    for (const auto& t : tensors) {
      table.push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"group", group}});
    }
  };
  describe(checkpoint.params, "model");
  describe(checkpoint.extra, "extra");
  const nlohmann::json header = {{"format", kFormatVersion},
                                 {"config", checkpoint.config},
                                 {"role", role_name(checkpoint.role)},
                                 {"step", checkpoint.step},
                                 {"rng_state", checkpoint.rng_state},
                                 {"metadata", checkpoint.metadata},
                                 {"tensors", table}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_tensors(out, checkpoint.params);
    write_tensors(out, checkpoint.extra);
    out.flush();
    if (!out) throw std::runtime_error("checkpoint write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_model(const std::filesystem::path& path, const TransformerLM& model) {
  save_checkpoint(path, make_checkpoint(model));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ParseError(path.string() + ": not a tokreg checkpoint");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (std::uint64_t{1} << 32)) throw ParseError(path.string() + ": bad header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError(path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": header is not JSON (" + e.what() + ")");
  }
  if (header.value("format", 0) != kFormatVersion) {
    throw ParseError(path.string() + ": unsupported checkpoint format");
  }

  Checkpoint c;
  c.config = header.at("config").get<ModelConfig>();
  c.role = role_from_name(header.at("role").get<std::string>());
  c.step = header.at("step").get<std::uint64_t>();
  c.rng_state = header.at("rng_state").get<std::string>();
  c.metadata = header.at("metadata");
  for (const auto& entry : header.at("tensors")) {
    numerics::Tensor t(entry.at("shape").get<numerics::Shape>());
    in.read(reinterpret_cast<char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw ParseError(path.string() + ": truncated tensor " + entry.at("name").get<std::string>());
    NamedTensor nt{entry.at("name").get<std::string>(), std::move(t)};
    (entry.at("group") == "model" ? c.params : c.extra).push_back(std::move(nt));
  }
  return c;
}

TransformerLM load_model(const std::filesystem::path& path) { return load_checkpoint(path).to_model(); }

}  // namespace tokreg::model
