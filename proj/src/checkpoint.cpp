#include "dfmcam/checkpoint.hpp"

#include <json.hpp>

#include "dfmcam/binary_io.hpp"
#include "dfmcam/error.hpp"

namespace dfmcam {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "DFMCKPT1";

json grid_to_json(const GridSpec& g) {
  return {{"resolution", g.resolution},
          {"padding", g.padding},
          {"origin", {g.origin.x, g.origin.y, g.origin.z}},
          {"extent", g.extent}};
}

GridSpec grid_from_json(const json& j) {
  GridSpec g;
  g.resolution = j.at("resolution");
  g.padding = j.at("padding");
  const auto o = j.at("origin").get<std::array<double, 3>>();
  g.origin = {o[0], o[1], o[2]};
  g.extent = j.at("extent");
  validate(g);
  return g;
}

}  // namespace

std::string encode_checkpoint(const Network<float>& net, const CheckpointMeta& meta) {
  json header;
  header["network"] = json::parse(spec_to_json(net.spec()));
  header["seed"] = meta.seed;
  header["epoch"] = meta.epoch;
  header["val_loss"] = meta.val_loss;
  if (meta.grid) header["grid"] = grid_to_json(*meta.grid);

  binio::Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointFormatVersion);
  w.str(header.dump());
  const auto params = net.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter<float>* p : params) {
    w.str(p->name);
    w.u64(p->size());
    w.f32_array(p->value);
    w.f32_array(p->acc_grad_sq);
    w.f32_array(p->acc_delta_sq);
  }
  const auto bufs = net.buffers();
  w.u32(static_cast<std::uint32_t>(bufs.size()));
  for (const std::vector<float>* b : bufs) {
    w.u64(b->size());
    w.f32_array(*b);
  }
  w.u64(binio::fnv1a(w.buffer()));
  return w.release();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagic.size() + 12) throw IoError("checkpoint: file too short");
  const std::string_view body(bytes.data(), bytes.size() - 8);
  binio::Reader trailer(std::string_view(bytes).substr(bytes.size() - 8), "checkpoint");
  if (trailer.u64() != binio::fnv1a(body)) throw IoError("checkpoint: checksum mismatch");

  binio::Reader r(body, "checkpoint");
  if (r.bytes(kMagic.size()) != kMagic) throw IoError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointFormatVersion)
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));

  json header;
  try {
    header = json::parse(r.str());
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: bad header: ") + e.what());
  }
  CheckpointMeta meta;
  NetworkSpec spec;
  try {
    spec = spec_from_json(header.at("network").dump());
    meta.seed = header.at("seed");
    meta.epoch = header.at("epoch");
    meta.val_loss = header.at("val_loss");
    if (header.contains("grid")) meta.grid = grid_from_json(header.at("grid"));
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: bad header: ") + e.what());
  } catch (const ValidationError& e) {
    throw IoError(std::string("checkpoint: bad header: ") + e.what());
  }

  Network<float> net(spec);
  auto params = net.parameters();
  if (r.u32() != params.size()) throw IoError("checkpoint: parameter count does not match layer specs");
  for (auto& ref : params) {
    Parameter<float>& p = *ref.param;
    if (r.str() != p.name) throw IoError("checkpoint: parameter order does not match layer specs");
    if (r.u64() != p.size()) throw IoError("checkpoint: parameter size does not match layer specs");
    p.value = r.f32_array(p.size());
    p.acc_grad_sq = r.f32_array(p.size());
    p.acc_delta_sq = r.f32_array(p.size());
    std::fill(p.grad.begin(), p.grad.end(), 0.0f);
  }
  auto bufs = net.buffers();
  if (r.u32() != bufs.size()) throw IoError("checkpoint: buffer count does not match layer specs");
  for (std::vector<float>* b : bufs) {
    if (r.u64() != b->size()) throw IoError("checkpoint: buffer size does not match layer specs");
    *b = r.f32_array(b->size());
  }
  if (r.remaining() != 0) throw IoError("checkpoint: trailing bytes");
  return {std::move(net), meta};
}

void save_checkpoint(const std::filesystem::path& path, const Network<float>& net, const CheckpointMeta& meta) {
  binio::write_file(path, encode_checkpoint(net, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(binio::read_file(path));
}

}  // namespace dfmcam
