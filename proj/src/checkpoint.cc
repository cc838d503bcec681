// Copyright 2026 The dprel Authors
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

#include "dprel/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "absl/strings/str_cat.h"
#include "json.hpp"

namespace dprel {
namespace {

using json = nlohmann::json;

struct NamedBlock {
  std::string name;
  RowMatrix* matrix;
};

std::vector<NamedBlock> AllBlocks(EncoderParams& params) {
  std::vector<NamedBlock> out;
  out.push_back({"embed", &params.mutable_embed()});
  auto& blocks = params.mutable_blocks();
  const bool adapter = params.config().mode == TrainMode::kAdapter;
  for (size_t l = 0; l < blocks.size(); ++l) {
    const std::string s = std::to_string(l);
    out.push_back({"weight_" + s, &blocks[l].weight});
    // Bias is a row vector; map it through a 1 x p matrix below.
    out.push_back({"bias_" + s, nullptr});
    if (adapter) {
      out.push_back({"down_" + s, &blocks[l].down});
      out.push_back({"up_" + s, &blocks[l].up});
    }
  }
  return out;
}

template <typename T>
void PutLe(std::string& buf, T value) {
  using U = std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>;
  U bits = std::bit_cast<U>(value);
  for (size_t i = 0; i < sizeof(U); ++i) {
    buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

template <typename T>
bool GetLe(const std::string& buf, size_t& pos, T& value) {
  using U = std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>;
  if (pos + sizeof(U) > buf.size()) return false;
  U bits = 0;
  for (size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  }
  pos += sizeof(U);
  value = std::bit_cast<T>(bits);
  return true;
}

const char* ModeName(TrainMode mode) {
  return mode == TrainMode::kAdapter ? "adapter" : "full";
}

}  // namespace

absl::Status SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  EncoderParams params = ckpt.params;
  const EncoderConfig& cfg = params.config();
  json header;
  header["vocab_size"] = cfg.vocab_size;
  header["dims"] = cfg.dims;
  header["mode"] = ModeName(cfg.mode);
  header["rank"] = cfg.rank;
  header["alpha"] = cfg.alpha;
  json lineage = json::parse(ckpt.lineage_json, nullptr, false);
  if (lineage.is_discarded() || !lineage.is_object()) {
    return absl::InvalidArgumentError("checkpoint lineage must be a JSON object");
  }
  header["lineage"] = lineage;
  std::vector<NamedBlock> blocks = AllBlocks(params);
  json shapes = json::array();
  for (size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    Eigen::Index rows = 1, cols = 0;
    if (b.matrix) {
      rows = b.matrix->rows();
      cols = b.matrix->cols();
    } else {
      cols = params.blocks()[std::stoi(b.name.substr(5))].bias.size();
    }
    shapes.push_back({{"name", b.name}, {"rows", rows}, {"cols", cols}});
  }
  header["blocks"] = shapes;
  const std::string text = header.dump();

  std::string buf(kCheckpointMagic, sizeof(kCheckpointMagic));
  PutLe(buf, kCheckpointVersion);
  PutLe(buf, static_cast<uint64_t>(text.size()));
  buf += text;
  for (const auto& b : blocks) {
    if (b.matrix) {
      const double* data = b.matrix->data();
      for (Eigen::Index i = 0; i < b.matrix->size(); ++i) PutLe(buf, data[i]);
    } else {
      const RowVector& bias = params.blocks()[std::stoi(b.name.substr(5))].bias;
      for (Eigen::Index i = 0; i < bias.size(); ++i) PutLe(buf, bias(i));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::NotFoundError(absl::StrCat("cannot write ", path));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) return absl::DataLossError(absl::StrCat("short write to ", path));
  return absl::OkStatus();
}

absl::StatusOr<Checkpoint> LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  const std::string buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  auto corrupt = [&](absl::string_view what) {
    return absl::DataLossError(absl::StrCat(path, ": ", what));
  };
  if (buf.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(buf.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    return corrupt("not a checkpoint (bad magic)");
  }
  size_t pos = sizeof(kCheckpointMagic);
  uint32_t version = 0;
  uint64_t header_len = 0;
  if (!GetLe(buf, pos, version) || !GetLe(buf, pos, header_len)) {
    return corrupt("truncated preamble");
  }
  if (version != kCheckpointVersion) {
    return corrupt(absl::StrCat("unsupported version ", version));
  }
  if (header_len > buf.size() - pos) return corrupt("truncated header");
  const json header =
      json::parse(buf.substr(pos, header_len), nullptr, false);
  pos += header_len;
  if (header.is_discarded()) return corrupt("malformed header");

  EncoderConfig cfg;
  try {
    cfg.vocab_size = header.at("vocab_size").get<int>();
    cfg.dims = header.at("dims").get<std::vector<int>>();
    const std::string mode = header.at("mode").get<std::string>();
    if (mode != "full" && mode != "adapter") return corrupt("unknown mode");
    cfg.mode = mode == "adapter" ? TrainMode::kAdapter : TrainMode::kFull;
    cfg.rank = header.at("rank").get<int>();
    cfg.alpha = header.at("alpha").get<double>();
  } catch (const json::exception& e) {
    return corrupt(e.what());
  }
  if (absl::Status s = ValidateConfig(cfg); !s.ok()) return s;

  // Build a correctly shaped parameter set, then overwrite every block.
  std::vector<DenseBlock> dense(cfg.num_blocks());
  for (int l = 0; l < cfg.num_blocks(); ++l) {
    dense[l].weight.resize(cfg.dims[l + 1], cfg.dims[l]);
    dense[l].bias.resize(cfg.dims[l + 1]);
    if (cfg.mode == TrainMode::kAdapter) {
      dense[l].down.resize(cfg.rank, cfg.dims[l]);
      dense[l].up.resize(cfg.dims[l + 1], cfg.rank);
    }
  }
  Checkpoint ckpt;
  ckpt.params = EncoderParams(cfg, RowMatrix(cfg.vocab_size, cfg.dims[0]),
                              std::move(dense));
  std::vector<NamedBlock> blocks = AllBlocks(ckpt.params);
  const json& shapes = header.value("blocks", json::array());
  if (shapes.size() != blocks.size()) return corrupt("block count mismatch");
  for (size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    RowVector* bias =
        b.matrix ? nullptr
                 : &ckpt.params.mutable_blocks()[std::stoi(b.name.substr(5))]
                        .bias;
    const Eigen::Index rows = b.matrix ? b.matrix->rows() : 1;
    const Eigen::Index cols = b.matrix ? b.matrix->cols() : bias->size();
    if (shapes[i].value("name", "") != b.name ||
        shapes[i].value("rows", -1) != rows ||
        shapes[i].value("cols", -1) != cols) {
      return corrupt(absl::StrCat("unexpected block ", shapes[i].dump()));
    }
    double* data = b.matrix ? b.matrix->data() : bias->data();
    for (Eigen::Index k = 0; k < rows * cols; ++k) {
      if (!GetLe(buf, pos, data[k])) return corrupt("truncated parameters");
    }
  }
  if (pos != buf.size()) return corrupt("trailing bytes");
  ckpt.lineage_json = header.value("lineage", json::object()).dump();
  return ckpt;
}

}  // namespace dprel
