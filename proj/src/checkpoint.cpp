#include "wcdiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace wcdiff {

namespace {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint files assume a little-endian host");

constexpr char kMagic[4] = {'V', 'X', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

json shape_to_json(const TensorShape& s) { return json::array({s.n, s.c, s.d, s.h, s.w}); }

TensorShape shape_from_json(const json& j) {
  if (!j.is_array() || j.size() != 5) throw FormatError("checkpoint: bad dims array");
  return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>(),
          j[3].get<std::int64_t>(), j[4].get<std::int64_t>()};
}

void write_doubles(std::ostream& out, const Eigen::ArrayXd& a) {
  out.write(reinterpret_cast<const char*>(a.data()),
            std::streamsize(a.size()) * std::streamsize(sizeof(double)));
}

Eigen::ArrayXd read_doubles(std::istream& in, std::int64_t n, const std::string& path) {
  Eigen::ArrayXd a(n);
  in.read(reinterpret_cast<char*>(a.data()), std::streamsize(n) * std::streamsize(sizeof(double)));
  if (!in) throw FormatError(path + ": truncated tensor payload");
  return a;
}

}  // namespace

Checkpoint Checkpoint::from_store(const std::string& kind, const ParamStore& store,
                                  const nn::UNetConfig& cfg, const NoiseSchedule& sched,
                                  const NormStats& norm) {
  Checkpoint ck;
  ck.kind = kind;
  ck.cfg = cfg;
  ck.sched_T = sched.T;
  ck.sched_beta_min = sched.beta[0];
  ck.sched_beta_max = sched.beta[sched.T - 1];
  ck.norm = norm;
  store.for_each([&](const Param& p) {
    CheckpointEntry e;
    e.name = p.name;
    e.shape = p.value.shape();
    e.adam_steps = p.adam_steps;
    e.has_adam = p.has_adam_state();
    e.value = p.value;
    if (e.has_adam) {
      e.m = p.m;
      e.v = p.v;
    }
    ck.entries.push_back(std::move(e));
  });
  return ck;
}

void Checkpoint::populate(ParamStore& store) const {
  if (store.size() != 0) throw StateError("checkpoint: populate requires an empty store");
  for (const auto& e : entries) {
    Param& p = store.bind(e.name, e.shape, [&](Tensor& t) { t.data() = e.value.data(); });
    p.adam_steps = e.adam_steps;
    if (e.has_adam) {
      p.m = e.m;
      p.v = e.v;
    }
  }
}

void Checkpoint::verify_bound(const ParamStore& store) const {
  if (store.size() != entries.size()) {
    for (const auto& name : store.names()) {
      bool found = false;
      for (const auto& e : entries)
        if (e.name == name) {
          found = true;
          break;
        }
      if (!found) throw FormatError("checkpoint missing parameter required by config: " + name);
    }
    throw FormatError("checkpoint contains parameters not used by config");
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json mf;
  mf["kind"] = ck.kind;
  mf["unet"] = {{"base_channels", ck.cfg.base_channels},
                {"levels", ck.cfg.levels},
                {"in_channels", ck.cfg.in_channels},
                {"out_channels", ck.cfg.out_channels},
                {"time_embed_width", ck.cfg.time_embed_width},
                {"gn_groups", ck.cfg.gn_groups}};
  mf["schedule"] = {{"T", ck.sched_T},
                    {"beta_min", ck.sched_beta_min},
                    {"beta_max", ck.sched_beta_max}};
  mf["normalization"] = {{"lo", ck.norm.lo}, {"hi", ck.norm.hi}};
  if (ck.kind == "branch") {
    mf["branch"] = {{"prior_channels", ck.prior_channels},
                    {"selector", ck.selector},
                    {"backbone_checksum", ck.backbone_checksum}};
  }
  json entries = json::array();
  for (const auto& e : ck.entries) {
    entries.push_back({{"name", e.name},
                       {"dims", shape_to_json(e.shape)},
                       {"adam_steps", e.adam_steps},
                       {"has_adam", e.has_adam}});
  }
  mf["entries"] = std::move(entries);

  const std::string manifest = mf.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create checkpoint file: " + path);
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), 4);
  const std::uint64_t mlen = manifest.size();
  out.write(reinterpret_cast<const char*>(&mlen), 8);
  out.write(manifest.data(), std::streamsize(manifest.size()));
  for (const auto& e : ck.entries) {
    write_doubles(out, e.value.data());
    if (e.has_adam) {
      write_doubles(out, e.m.data());
      write_doubles(out, e.v.data());
    }
  }
  if (!out) throw IoError("write failed: " + path);
  out.close();
  if (!out) throw IoError("close failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint file: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": not a VXC1 checkpoint file");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (!in || version != kVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), 8);
  if (!in) throw FormatError(path + ": truncated manifest length");
  std::string manifest(mlen, '\0');
  in.read(manifest.data(), std::streamsize(mlen));
  if (!in) throw FormatError(path + ": truncated manifest");

  json mf;
  try {
    mf = json::parse(manifest);
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad manifest JSON: " + e.what());
  }

  Checkpoint ck;
  try {
    ck.kind = mf.at("kind").get<std::string>();
    const json& u = mf.at("unet");
    ck.cfg.base_channels = u.at("base_channels").get<std::int64_t>();
    ck.cfg.levels = u.at("levels").get<std::int64_t>();
    ck.cfg.in_channels = u.at("in_channels").get<std::int64_t>();
    ck.cfg.out_channels = u.at("out_channels").get<std::int64_t>();
    ck.cfg.time_embed_width = u.at("time_embed_width").get<std::int64_t>();
    ck.cfg.gn_groups = u.at("gn_groups").get<std::int64_t>();
    const json& s = mf.at("schedule");
    ck.sched_T = s.at("T").get<std::int64_t>();
    ck.sched_beta_min = s.at("beta_min").get<double>();
    ck.sched_beta_max = s.at("beta_max").get<double>();
    const json& nrm = mf.at("normalization");
    ck.norm.lo = nrm.at("lo").get<double>();
    ck.norm.hi = nrm.at("hi").get<double>();
    if (ck.kind == "branch") {
      const json& b = mf.at("branch");
      ck.prior_channels = b.at("prior_channels").get<std::int64_t>();
      ck.selector = b.at("selector").get<std::string>();
      ck.backbone_checksum = b.at("backbone_checksum").get<std::uint64_t>();
    } else if (ck.kind != "backbone") {
      throw FormatError(path + ": unknown checkpoint kind '" + ck.kind + "'");
    }
    for (const json& je : mf.at("entries")) {
      CheckpointEntry e;
      e.name = je.at("name").get<std::string>();
      e.shape = shape_from_json(je.at("dims"));
      e.adam_steps = je.at("adam_steps").get<std::int64_t>();
      e.has_adam = je.at("has_adam").get<bool>();
      ck.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": manifest field error: " + e.what());
  }

  for (auto& e : ck.entries) {
    const std::int64_t n = e.shape.count();
    e.value = Tensor(e.shape, read_doubles(in, n, path));
    if (e.has_adam) {
      e.m = Tensor(e.shape, read_doubles(in, n, path));
      e.v = Tensor(e.shape, read_doubles(in, n, path));
    }
  }
  char extra;
  if (in.read(&extra, 1)) throw FormatError(path + ": trailing bytes after tensor payload");
  return ck;
}

}  // namespace wcdiff
