#include "steprl/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace steprl::nn {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'E', 'P', 'R', 'L', 'C', 'K'};
constexpr int kVersion = 1;

void write_tensor(std::ofstream& os, const Tensor& t) {
  os.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

void read_tensor(std::ifstream& is, Tensor& t, const std::filesystem::path& path) {
  is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!is) throw CheckpointError("truncated checkpoint: " + path.string());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json h;
  h["version"] = kVersion;
  h["model"] = to_json(ck.params.cfg);
  h["names"] = ck.params.names();
  nlohmann::json shapes = nlohmann::json::array();
  for (const Tensor* t : ck.params.tensors()) shapes.push_back({t->rows, t->cols});
  h["shapes"] = shapes;
  if (ck.optimizer) {
    h["optimizer"] = {{"config", to_json(ck.optimizer->cfg)}, {"step", ck.optimizer->step}};
  }
  h["meta"] = ck.meta;
  const std::string header = h.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    const std::uint64_t n = header.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof n);
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const Tensor* t : ck.params.tensors()) write_tensor(os, *t);
    if (ck.optimizer) {
      for (const Tensor& t : ck.optimizer->m) write_tensor(os, t);
      for (const Tensor& t : ck.optimizer->v) write_tensor(os, t);
    }
    if (!os) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError("not a checkpoint: " + path.string());
  std::uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!is || n > (1u << 26)) throw CheckpointError("bad checkpoint header: " + path.string());
  std::string header(n, '\0');
  is.read(header.data(), static_cast<std::streamsize>(n));
  if (!is) throw CheckpointError("truncated checkpoint header: " + path.string());

  Checkpoint ck;
  try {
    const auto h = nlohmann::json::parse(header);
    if (h.at("version").get<int>() != kVersion) throw CheckpointError("unsupported checkpoint version in " + path.string());
    ck.params = zeros_like(model_config_from_json(h.at("model")));
    const auto shapes = h.at("shapes");
    auto tensors = ck.params.tensors();
    if (shapes.size() != tensors.size() || h.at("names").get<std::vector<std::string>>() != ck.params.names())
      throw CheckpointError("checkpoint tensor layout does not match its model config: " + path.string());
    for (std::size_t i = 0; i < tensors.size(); ++i)
      if (shapes[i][0].get<int>() != tensors[i]->rows || shapes[i][1].get<int>() != tensors[i]->cols)
        throw CheckpointError("checkpoint shape mismatch for " + ck.params.names()[i]);
    for (Tensor* t : tensors) read_tensor(is, *t, path);
    if (h.contains("optimizer")) {
      OptimizerState st = make_optimizer(ck.params, adamw_config_from_json(h["optimizer"].at("config")));
      st.step = h["optimizer"].at("step").get<std::int64_t>();
      for (Tensor& t : st.m) read_tensor(is, t, path);
      for (Tensor& t : st.v) read_tensor(is, t, path);
      ck.optimizer = std::move(st);
    }
    ck.meta = h.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  if (is.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes in checkpoint " + path.string());
  return ck;
}

}  // namespace steprl::nn
