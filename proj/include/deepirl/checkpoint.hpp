#pragma once

// Network checkpoints: a text manifest plus a little-endian f32 blob.

#include <filesystem>
#include <string>

#include "deepirl/architectures.hpp"
#include "deepirl/error.hpp"
#include "deepirl/io.hpp"

namespace deepirl {

struct CheckpointInfo {
  ArchitectureId architecture = ArchitectureId::StandardFcn;
  long long step = 0;
  std::uint64_t seed = 0;
  double resolution_m = 0.25;
};

/// Rounds every parameter and buffer to f32, the on-disk precision.
inline void round_to_storage(nn::NetworkGraph& net) {
  for (auto& p : net.parameters())
    for (auto& v : p.value) v = static_cast<float>(v);
  for (auto& [name, b] : net.buffers())
    for (auto& v : b) v = static_cast<float>(v);
}

/// Writes `dir/manifest.txt` and `dir/params.f32`.
inline void save_checkpoint(nn::NetworkGraph& net, const CheckpointInfo& info, const std::filesystem::path& dir) {
  io::Manifest m;
  m.set("format", "deepirl-checkpoint-1");
  m.set("architecture", to_string(info.architecture));
  m.set("in_channels", net.input_channels());
  m.set("step", info.step);
  m.set("seed", info.seed);
  m.set("resolution_m", info.resolution_m);
  for (const auto& spec : net.layer_specs()) m.set("layer", spec);
  std::string blob;
  for (const auto& p : net.parameters()) {
    m.set("param", p.name + " " + std::to_string(p.value.size()));
    for (double v : p.value) io::append_f32(blob, v);
  }
  for (const auto& [name, b] : net.buffers()) {
    m.set("buffer", name + " " + std::to_string(b.size()));
    for (double v : b) io::append_f32(blob, v);
  }
  m.set("blob", "params.f32 f32le");
  io::write_file(dir / "params.f32", blob);
  m.save(dir / "manifest.txt");
}

struct LoadedCheckpoint {
  nn::NetworkGraph net;
  CheckpointInfo info;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto m = io::Manifest::load(dir / "manifest.txt");
  if (m.get("format") != "deepirl-checkpoint-1") throw DataError("unsupported checkpoint format in " + dir.string());
  LoadedCheckpoint out;
  try {
    out.info.architecture = architecture_from_string(m.get("architecture"));
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  out.info.step = m.get_int("step");
  out.info.seed = std::stoull(m.get("seed"));
  out.info.resolution_m = m.get_double("resolution_m");
  const int in_channels = static_cast<int>(m.get_int("in_channels"));
  switch (out.info.architecture) {
    case ArchitectureId::StandardFcn: out.net = build_standard_fcn(in_channels); break;
    case ArchitectureId::PoolingFcn: out.net = build_pooling_fcn(in_channels); break;
    case ArchitectureId::MsFcn: out.net = build_ms_fcn(in_channels); break;
  }
  if (m.get_all("layer") != out.net.layer_specs())
    throw DataError("checkpoint layer layout does not match architecture " + m.get("architecture"));

  io::BlobReader r(io::read_file(dir / "params.f32"));
  auto expect = [&](const std::string& line, const std::string& name, std::size_t n) {
    if (line != name + " " + std::to_string(n)) throw DataError("checkpoint entry mismatch: '" + line + "'");
  };
  const auto params = m.get_all("param");
  auto refs = out.net.parameters();
  if (params.size() != refs.size()) throw DataError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    expect(params[i], refs[i].name, refs[i].value.size());
    for (auto& v : refs[i].value) v = r.f32();
  }
  const auto buffers = m.get_all("buffer");
  auto bufs = out.net.buffers();
  if (buffers.size() != bufs.size()) throw DataError("checkpoint buffer count mismatch");
  for (std::size_t i = 0; i < bufs.size(); ++i) {
    expect(buffers[i], bufs[i].first, bufs[i].second.size());
    for (auto& v : bufs[i].second) v = r.f32();
  }
  if (!r.at_end()) throw DataError("trailing bytes in checkpoint blob");
  return out;
}

}  // namespace deepirl
