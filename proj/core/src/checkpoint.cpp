// Copyright 2026 The ocsd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ocsd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"

namespace ocsd {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'O', 'C', 'S', 'D'};
constexpr std::size_t kPreamble = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

void put_tensor(std::string& out, const Tensor<float>& t) {
  for (float f : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

json shape_json(const Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

json network_json(const NetworkConfig& c) {
  return json{{"over_channels", c.over_channels},
              {"under_channels", c.under_channels},
              {"input_channels", c.input_channels},
              {"output_channels", c.output_channels},
              {"seed", c.seed}};
}

NetworkConfig network_from_json(const json& j) {
  NetworkConfig c;
  c.over_channels = j.at("over_channels").get<int>();
  c.under_channels = j.at("under_channels").get<std::array<int, kUnderDepth>>();
  c.input_channels = j.at("input_channels").get<int>();
  c.output_channels = j.at("output_channels").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json training_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
              {"tv_weight", c.tv_weight},         {"crop_size", c.crop_size},
              {"batch_size", c.batch_size},       {"looks", c.looks},
              {"crops_per_image", c.crops_per_image},
              {"train_fraction", c.train_fraction},
              {"seed", c.seed},                   {"beta1", c.beta1},
              {"beta2", c.beta2},                 {"epsilon", c.epsilon}};
}

TrainConfig training_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.tv_weight = j.at("tv_weight").get<double>();
  c.crop_size = j.at("crop_size").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.looks = j.at("looks").get<int>();
  c.crops_per_image = j.at("crops_per_image").get<int>();
  c.train_fraction = j.at("train_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  return c;
}

json progress_json(const TrainProgress& p) {
  json history = json::array();
  for (const EpochRecord& r : p.history) {
    history.push_back({{"epoch", r.epoch},
                       {"train_loss", r.train_loss},
                       {"val_psnr", r.val_psnr ? json(*r.val_psnr) : json(nullptr)}});
  }
  return json{{"global_step", p.global_step},       {"epoch", p.epoch},
              {"step_in_epoch", p.step_in_epoch},   {"epoch_loss_sum", p.epoch_loss_sum},
              {"epoch_batches", p.epoch_batches},   {"history", std::move(history)}};
}

TrainProgress progress_from_json(const json& j) {
  TrainProgress p;
  p.global_step = j.at("global_step").get<std::int64_t>();
  p.epoch = j.at("epoch").get<int>();
  p.step_in_epoch = j.at("step_in_epoch").get<std::int64_t>();
  p.epoch_loss_sum = j.at("epoch_loss_sum").get<double>();
  p.epoch_batches = j.at("epoch_batches").get<std::int64_t>();
  for (const json& r : j.at("history")) {
    EpochRecord rec;
    rec.epoch = r.at("epoch").get<int>();
    rec.train_loss = r.at("train_loss").get<double>();
    if (!r.at("val_psnr").is_null()) rec.val_psnr = r.at("val_psnr").get<double>();
    p.history.push_back(rec);
  }
  return p;
}

struct ManifestEntry {
  std::string name;
  Shape shape;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const NetworkParams<float>& params = ckpt.params;
  json manifest = json::array();
  auto add_entry = [&manifest](const std::string& name, const Shape& s) {
    manifest.push_back({{"name", name}, {"dtype", "f32"}, {"shape", shape_json(s)}});
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    add_entry(params.name(i), params.tensor(i).shape());
  }
  if (ckpt.adam) {
    if (ckpt.adam->m.size() != params.size() || ckpt.adam->v.size() != params.size()) {
      throw CheckpointError("optimiser state does not match the parameter set");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      add_entry("adam.m." + params.name(i), ckpt.adam->m[i].shape());
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      add_entry("adam.v." + params.name(i), ckpt.adam->v[i].shape());
    }
  }
  json header;
  header["network"] = network_json(params.config());
  header["training"] = ckpt.training ? training_json(*ckpt.training) : json(nullptr);
  header["progress"] = progress_json(ckpt.progress);
  header["rng"] = {{"generator", "xoshiro256** seeded by splitmix64"},
                   {"seed", ckpt.training ? ckpt.training->seed : params.config().seed},
                   {"global_step", ckpt.progress.global_step}};
  header["adam"] = ckpt.adam ? json{{"step", ckpt.adam->step}} : json(nullptr);
  header["tensors"] = std::move(manifest);
  const std::string header_text = header.dump();

  std::string bytes(kMagic, sizeof kMagic);
  put_u32(bytes, kCheckpointVersion);
  put_u64(bytes, header_text.size());
  bytes += header_text;
  for (const auto& t : params.tensors()) put_tensor(bytes, t);
  if (ckpt.adam) {
    for (const auto& t : ckpt.adam->m) put_tensor(bytes, t);
    for (const auto& t : ckpt.adam->v) put_tensor(bytes, t);
  }

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw CheckpointError("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw CheckpointError("cannot move checkpoint into place at " + path.string() + ": " +
                          ec.message());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < kPreamble) throw CheckpointError(where + "truncated preamble");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(where + "bad magic, not an OCSD checkpoint");
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kCheckpointVersion) {
    throw CheckpointError(where + "unsupported format version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t header_len = get_le(bytes, 8, 8);
  if (header_len > bytes.size() - kPreamble) {
    throw CheckpointError(where + "truncated header");
  }
  json header;
  try {
    header = json::parse(bytes.begin() + kPreamble,
                         bytes.begin() + static_cast<std::ptrdiff_t>(kPreamble + header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(where + "malformed header: " + e.what());
  }

  try {
    const NetworkConfig network = network_from_json(header.at("network"));
    const auto layout = parameter_layout(network);
    std::vector<ManifestEntry> entries;
    for (const json& e : header.at("tensors")) {
      if (e.at("dtype").get<std::string>() != "f32") {
        throw CheckpointError(where + "unsupported dtype for " + e.at("name").get<std::string>());
      }
      const auto dims = e.at("shape").get<std::vector<std::int64_t>>();
      if (dims.size() != 4) throw CheckpointError(where + "tensor rank must be 4");
      entries.push_back({e.at("name").get<std::string>(), Shape{dims[0], dims[1], dims[2], dims[3]}});
    }
    const bool has_adam = !header.at("adam").is_null();
    const std::size_t expected = layout.size() * (has_adam ? 3 : 1);
    if (entries.size() != expected) {
      throw CheckpointError(where + "manifest lists " + std::to_string(entries.size()) +
                            " tensors, expected " + std::to_string(expected));
    }
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const ParamSpec& spec = layout[k % layout.size()];
      const std::size_t group = k / layout.size();
      const std::string want =
          group == 0 ? spec.name : (group == 1 ? "adam.m." : "adam.v.") + spec.name;
      if (entries[k].name != want || !(entries[k].shape == spec.shape)) {
        throw CheckpointError(where + "manifest entry " + std::to_string(k) + " (" +
                              entries[k].name + " " + to_string(entries[k].shape) +
                              ") does not match network layout (" + want + " " +
                              to_string(spec.shape) + ")");
      }
    }

    std::size_t pos = kPreamble + header_len;
    auto read_tensor = [&](const Shape& s) {
      const auto count = static_cast<std::size_t>(s.numel());
      if (bytes.size() - pos < count * 4) throw CheckpointError(where + "truncated payload");
      std::vector<float> data(count);
      for (std::size_t k = 0; k < count; ++k) {
        data[k] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, pos, 4)));
        pos += 4;
      }
      return Tensor<float>(s, std::move(data));
    };
    std::vector<Tensor<float>> tensors;
    for (const ParamSpec& spec : layout) tensors.push_back(read_tensor(spec.shape));
    Checkpoint ckpt{NetworkParams<float>(network, std::move(tensors)), std::nullopt,
                    std::nullopt, {}};
    if (has_adam) {
      AdamState<float> adam;
      adam.step = header.at("adam").at("step").get<std::int64_t>();
      for (const ParamSpec& spec : layout) adam.m.push_back(read_tensor(spec.shape));
      for (const ParamSpec& spec : layout) adam.v.push_back(read_tensor(spec.shape));
      ckpt.adam = std::move(adam);
    }
    if (pos != bytes.size()) {
      throw CheckpointError(where + std::to_string(bytes.size() - pos) +
                            " unexpected trailing bytes");
    }
    if (!header.at("training").is_null()) {
      ckpt.training = training_from_json(header.at("training"));
    }
    ckpt.progress = progress_from_json(header.at("progress"));
    return ckpt;
  } catch (const json::exception& e) {
    throw CheckpointError(where + "malformed header: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(where + e.what());
  }
}

Checkpoint make_checkpoint(const Trainer& trainer) {
  return Checkpoint{trainer.params(), trainer.adam(), trainer.config(), trainer.progress()};
}

}  // namespace ocsd
