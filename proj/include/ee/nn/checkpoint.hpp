#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "ee/common/error.hpp"
#include "ee/nn/adamw.hpp"
#include "ee/nn/model.hpp"

namespace ee::nn {

// Checkpoint layout (little endian):
//   8 bytes magic "EECKPT01", u32 version
//   u64 n + n bytes: JSON header (specs, normalisation stats, epoch, config hash)
//   u64 count, then per tensor: u64 name length, name, u64 rank, rank x u64 dims, data
//   u64 optimizer step, then first and second moments in parameter order
// A sidecar "<file>.manifest.json" lists tensor shapes and the config hash.

inline constexpr std::array<char, 8> kCheckpointMagic = {'E', 'E', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json to_json(const EncoderSpec& s) {
  return {{"crop_len", s.crop_len}, {"channels", s.channels}, {"widths", s.widths}, {"kernels", s.kernels},
          {"hidden", s.hidden},     {"embed", s.embed},       {"out", s.out}};
}

inline EncoderSpec encoder_spec_from_json(const nlohmann::json& j) {
  EncoderSpec s;
  s.crop_len = j.at("crop_len");
  s.channels = j.at("channels");
  s.widths = j.at("widths").get<std::vector<std::size_t>>();
  s.kernels = j.at("kernels").get<std::vector<std::size_t>>();
  s.hidden = j.at("hidden");
  s.embed = j.at("embed");
  s.out = j.at("out");
  return s;
}

inline nlohmann::json to_json(const EmulatorSpec& s) {
  return {{"in", s.in}, {"component", s.component}, {"blocks", s.blocks}, {"embed", s.embed}};
}

inline EmulatorSpec emulator_spec_from_json(const nlohmann::json& j) {
  EmulatorSpec s;
  s.in = j.at("in");
  s.component = j.at("component");
  s.blocks = j.at("blocks");
  s.embed = j.at("embed");
  return s;
}

struct Checkpoint {
  std::unique_ptr<Model> model;
  std::size_t epoch = 0;
  std::string config_hash;
  std::size_t optimizer_step = 0;
  std::vector<Tensor> first_moments, second_moments;
};

namespace detail {

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw Error("checkpoint: truncated file");
  return v;
}

inline void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  put<std::uint64_t>(os, name.size());
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint64_t>(os, t.shape.size());
  for (auto d : t.shape) put<std::uint64_t>(os, d);
  os.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline Tensor get_tensor(std::istream& is, std::string& name) {
  name.resize(get<std::uint64_t>(is));
  is.read(name.data(), static_cast<std::streamsize>(name.size()));
  std::vector<std::size_t> shape(get<std::uint64_t>(is));
  for (auto& d : shape) d = get<std::uint64_t>(is);
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!is) throw Error("checkpoint: truncated tensor " + name);
  return t;
}

}  // namespace detail

inline std::filesystem::path manifest_path(const std::filesystem::path& ckpt) {
  return ckpt.string() + ".manifest.json";
}

inline void save_checkpoint(const std::filesystem::path& path, Model& model, const AdamW* opt, std::size_t epoch,
                            const std::string& config_hash) {
  nlohmann::json head;
  head["version"] = kCheckpointVersion;
  head["encoder"] = to_json(model.encoder.spec());
  head["emulator"] = to_json(model.emulator.spec());
  head["input_mean"] = model.encoder.input_mean();
  head["input_std"] = model.encoder.input_std();
  head["param_mean"] = model.emulator.param_mean();
  head["param_std"] = model.emulator.param_std();
  head["epoch"] = epoch;
  head["config_hash"] = config_hash;
  const std::string hs = head.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint64_t>(os, hs.size());
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));

  const auto params = model.parameters();
  detail::put<std::uint64_t>(os, params.size());
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto* p : params) {
    detail::put_tensor(os, p->name, p->value);
    shapes.push_back({{"name", p->name}, {"shape", p->value.shape}});
  }
  detail::put<std::uint64_t>(os, opt ? opt->step_count() : 0);
  detail::put<std::uint8_t>(os, opt ? 1 : 0);
  if (opt) {
    for (std::size_t k = 0; k < params.size(); ++k) detail::put_tensor(os, params[k]->name + ".m", opt->first_moments()[k]);
    for (std::size_t k = 0; k < params.size(); ++k) detail::put_tensor(os, params[k]->name + ".v", opt->second_moments()[k]);
  }
  if (!os) throw Error("failed writing " + path.string());

  nlohmann::json man;
  man["format_version"] = kCheckpointVersion;
  man["config_hash"] = config_hash;
  man["epoch"] = epoch;
  man["encoder"] = head["encoder"];
  man["emulator"] = head["emulator"];
  man["tensors"] = shapes;
  man["optimizer_state"] = opt != nullptr;
  std::ofstream ms(manifest_path(path));
  ms << man.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCheckpointMagic) throw Error(path.string() + ": not a checkpoint");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw Error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  std::string hs(detail::get<std::uint64_t>(is), '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hs.size()));
  const auto head = nlohmann::json::parse(hs);

  Checkpoint ck;
  Rng dummy(0);
  ck.model = std::make_unique<Model>(encoder_spec_from_json(head.at("encoder")),
                                     emulator_spec_from_json(head.at("emulator")), dummy);
  ck.model->encoder.set_input_stats(head.at("input_mean"), head.at("input_std"));
  ck.model->emulator.set_param_stats(head.at("param_mean"), head.at("param_std"));
  ck.epoch = head.at("epoch");
  ck.config_hash = head.at("config_hash");

  auto params = ck.model->parameters();
  const auto count = detail::get<std::uint64_t>(is);
  if (count != params.size()) throw Error(path.string() + ": parameter count mismatch");
  std::string name;
  for (auto* p : params) {
    Tensor t = detail::get_tensor(is, name);
    if (name != p->name || t.shape != p->value.shape)
      throw Error(path.string() + ": unexpected tensor " + name + shape_string(t.shape));
    p->value = std::move(t);
    p->zero_grad();
  }
  ck.optimizer_step = detail::get<std::uint64_t>(is);
  if (detail::get<std::uint8_t>(is)) {
    for (std::size_t k = 0; k < params.size(); ++k) ck.first_moments.push_back(detail::get_tensor(is, name));
    for (std::size_t k = 0; k < params.size(); ++k) ck.second_moments.push_back(detail::get_tensor(is, name));
  }
  return ck;
}

}  // namespace ee::nn
