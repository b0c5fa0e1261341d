// Copyright 2026 The Osq Authors
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

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "osq/error.hpp"
#include "osq/training.hpp"

namespace osq {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

constexpr char kMagic[8] = {'O', 'S', 'Q', '2', 'S', 'Q', '1', '\0'};

struct Entry {
  std::string name;
  std::vector<std::size_t> shape;
  const Tensor* tensor = nullptr;  // save side
  Tensor* slot = nullptr;          // load side
};

std::size_t entry_size(const Entry& e) {
  std::size_t n = 1;
  for (std::size_t d : e.shape) n *= d;
  return n;
}

// Serialized tensors in a fixed order: model registry, first-moment and
// second-moment optimizer slots, then the running baseline statistics as
// a length-3 vector (mean, m2, count).
std::vector<Entry> manifest_layout(const ModelParams& params,
                                   const OptimizerState& opt) {
  std::vector<Entry> entries;
  params.for_each_tensor([&](const std::string& name, const Tensor& t) {
    entries.push_back({name, t.shape, &t, nullptr});
  });
  const std::size_t n = entries.size();
  require(opt.m.size() == n && opt.v.size() == n, ErrorKind::kShape,
          "optimizer state does not match the model");
  for (std::size_t i = 0; i < n; ++i)
    entries.push_back(
        {"adam.m." + entries[i].name, opt.m[i].shape, &opt.m[i], nullptr});
  for (std::size_t i = 0; i < n; ++i)
    entries.push_back(
        {"adam.v." + entries[i].name, opt.v[i].shape, &opt.v[i], nullptr});
  entries.push_back({"baseline.stats", {3}, nullptr, nullptr});
  return entries;
}

nlohmann::json hyper_to_json(const Hyperparams& h) {
  nlohmann::json j;
  j["num_layers"] = h.num_layers;
  j["hidden_size"] = h.hidden_size;
  j["input_dim"] = h.input_dim;
  j["vocab_size"] = h.vocab_size;
  j["dropout_target"] = h.dropout_target;
  j["init_scale"] = h.init_scale;
  return j;
}

Hyperparams hyper_from_json(const nlohmann::json& j) {
  require(j.is_object(), ErrorKind::kFormat,
          "checkpoint hyperparams must be an object");
  Hyperparams h;
  auto read_int = [&](const char* key, int& out) {
    require(j.contains(key) && j.at(key).is_number_integer(),
            ErrorKind::kFormat,
            std::string("checkpoint hyperparams missing integer '") + key +
                "'");
    out = j.at(key).get<int>();
  };
  auto read_num = [&](const char* key, double& out) {
    require(j.contains(key) && j.at(key).is_number(), ErrorKind::kFormat,
            std::string("checkpoint hyperparams missing number '") + key +
                "'");
    out = j.at(key).get<double>();
  };
  read_int("num_layers", h.num_layers);
  read_int("hidden_size", h.hidden_size);
  read_int("input_dim", h.input_dim);
  read_int("vocab_size", h.vocab_size);
  read_num("dropout_target", h.dropout_target);
  read_num("init_scale", h.init_scale);
  return h;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const OptimizerState& opt,
                     const BaselineStats& stats, std::uint64_t step,
                     const std::string& path) {
  const std::vector<Entry> entries = manifest_layout(params, opt);

  nlohmann::json header;
  header["hyperparams"] = hyper_to_json(params.hyper);
  header["train_step"] = step;
  header["adam_t"] = opt.t;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& e : entries)
    manifest.push_back(
        {{"name", e.name}, {"shape", e.shape}, {"dtype", "f64"}});
  header["manifest"] = std::move(manifest);
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot open '" + path + "' to write");
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(header_text.data(),
            static_cast<std::streamsize>(header_text.size()));
  for (const auto& e : entries) {
    if (e.tensor != nullptr) {
      out.write(reinterpret_cast<const char*>(e.tensor->data.data()),
                static_cast<std::streamsize>(e.tensor->size() *
                                             sizeof(double)));
    } else {
      const double triple[3] = {stats.mean, stats.m2,
                                static_cast<double>(stats.count)};
      out.write(reinterpret_cast<const char*>(triple), sizeof triple);
    }
  }
  out.flush();
  require(out.good(), ErrorKind::kIo, "failed writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  require(in.good() || in.eof(), ErrorKind::kIo, "failed reading '" + path + "'");

  require(bytes.size() >= sizeof kMagic + sizeof(std::uint64_t),
          ErrorKind::kFormat, "checkpoint truncated before the header");
  require(std::memcmp(bytes.data(), kMagic, sizeof kMagic) == 0,
          ErrorKind::kFormat, "not a checkpoint (bad magic)");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + sizeof kMagic, sizeof header_len);
  const std::size_t payload_off =
      sizeof kMagic + sizeof(std::uint64_t) + header_len;
  require(header_len <= bytes.size() - sizeof kMagic - sizeof(std::uint64_t),
          ErrorKind::kFormat, "checkpoint truncated inside the header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(
        bytes.begin() + sizeof kMagic + sizeof(std::uint64_t),
        bytes.begin() + static_cast<std::ptrdiff_t>(payload_off));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat,
         std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  require(header.is_object() && header.contains("hyperparams") &&
              header.contains("train_step") && header.contains("adam_t") &&
              header.contains("manifest") && header.at("manifest").is_array(),
          ErrorKind::kFormat, "checkpoint header is missing required fields");

  Checkpoint ckpt;
  const Hyperparams hyper = hyper_from_json(header.at("hyperparams"));
  hyper.validate();
  {
    RngState scratch(0);  // every value is overwritten from the payload
    ckpt.params = init_params(hyper, scratch);
  }
  ckpt.opt = OptimizerState::zeros_like(ckpt.params);
  require(header.at("train_step").is_number_integer() &&
              header.at("adam_t").is_number_integer(),
          ErrorKind::kFormat, "checkpoint step counters must be integers");
  ckpt.step = header.at("train_step").get<std::uint64_t>();
  ckpt.opt.t = header.at("adam_t").get<std::uint64_t>();

  std::vector<Entry> entries = manifest_layout(ckpt.params, ckpt.opt);
  {
    std::vector<Tensor*> slots = ckpt.params.tensor_ptrs();
    const std::size_t n = slots.size();
    for (std::size_t i = 0; i < n; ++i) {
      entries[i].slot = slots[i];
      entries[n + i].slot = &ckpt.opt.m[i];
      entries[2 * n + i].slot = &ckpt.opt.v[i];
    }
  }

  const auto& manifest = header.at("manifest");
  require(manifest.size() == entries.size(), ErrorKind::kFormat,
          "checkpoint manifest has the wrong number of tensors");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& m = manifest.at(i);
    require(m.is_object() && m.contains("name") && m.contains("shape") &&
                m.contains("dtype"),
            ErrorKind::kFormat, "checkpoint manifest entry is malformed");
    require(m.at("dtype").get<std::string>() == "f64", ErrorKind::kFormat,
            "checkpoint manifest entry is not f64");
    const std::string name = m.at("name").get<std::string>();
    require(name == entries[i].name, ErrorKind::kShape,
            "checkpoint tensor '" + name + "' found where '" +
                entries[i].name + "' was expected");
    const std::vector<std::size_t> shape =
        m.at("shape").get<std::vector<std::size_t>>();
    require(shape == entries[i].shape, ErrorKind::kShape,
            "checkpoint tensor '" + name +
                "' does not match the declared hyperparams");
  }

  std::size_t expected_payload = 0;
  for (const auto& e : entries) expected_payload += entry_size(e) * 8;
  require(bytes.size() - payload_off == expected_payload, ErrorKind::kFormat,
          bytes.size() - payload_off < expected_payload
              ? "checkpoint truncated inside the payload"
              : "checkpoint has trailing bytes");

  std::size_t off = payload_off;
  for (auto& e : entries) {
    const std::size_t n = entry_size(e);
    if (e.slot != nullptr) {
      std::memcpy(e.slot->data.data(), bytes.data() + off, n * 8);
    } else {
      double triple[3];
      std::memcpy(triple, bytes.data() + off, sizeof triple);
      ckpt.stats.mean = triple[0];
      ckpt.stats.m2 = triple[1];
      ckpt.stats.count = static_cast<std::uint64_t>(triple[2]);
    }
    off += n * 8;
  }
  return ckpt;
}

}  // namespace osq
