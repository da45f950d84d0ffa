#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "wcdiff/model.hpp"

using namespace wcdiff;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  const fs::path p = fs::temp_directory_path() / "wcdiff_test_optim";
  fs::create_directories(p);
  return p;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

nn::UNetConfig tiny_cfg() {
  nn::UNetConfig cfg;
  cfg.base_channels = 4;
  cfg.gn_groups = 2;
  cfg.time_embed_width = 8;
  return cfg;
}

// Deterministic pseudo-training: fills grads from a seeded stream and steps.
void churn(ParamStore& store, std::uint64_t seed, int steps, const AdamConfig& cfg = {}) {
  const Rng rng(seed);
  for (int s = 0; s < steps; ++s) {
    store.zero_grads();
    std::uint64_t c = std::uint64_t(s) << 32;
    store.for_each([&](Param& p) {
      for (std::int64_t i = 0; i < p.grad.size(); ++i) p.grad.data()[i] = rng.normal(c++);
    });
    store.adam_step(cfg);
  }
}

}  // namespace

TEST_CASE("adam first step moves by roughly lr in the gradient direction") {
  ParamStore store;
  Param& p = store.bind_zero("p", {1, 2, 1, 1, 1});
  p.value.data() << 0.3, -0.1;
  p.grad.data() << 0.5, -0.5;
  AdamConfig cfg;
  cfg.lr = 0.01;
  store.adam_step(cfg);

  // Bias correction makes m_hat = g and v_hat = g^2 on step one.
  const double delta = 0.01 * 0.5 / (0.5 + 1e-8);
  CHECK(p.value.data()[0] == doctest::Approx(0.3 - delta).epsilon(1e-15));
  CHECK(p.value.data()[1] == doctest::Approx(-0.1 + delta).epsilon(1e-15));
  CHECK(p.value.data()[0] == doctest::Approx(0.3 - 0.01).epsilon(1e-6));
  CHECK(p.adam_steps == 1);
  CHECK(p.has_adam_state());
}

TEST_CASE("adam minimizes a quadratic") {
  ParamStore store;
  Param& p = store.bind_zero("x", {1, 4, 1, 1, 1});
  Eigen::ArrayXd target(4);
  target << 1.0, -2.0, 0.5, 3.0;
  AdamConfig cfg;
  cfg.lr = 0.05;
  for (int it = 0; it < 2000; ++it) {
    store.zero_grads();
    p.grad.data() = 2.0 * (p.value.data() - target);
    store.adam_step(cfg);
  }
  CHECK((p.value.data() - target).abs().maxCoeff() < 1e-4);
}

TEST_CASE("frozen parameters are skipped entirely by adam") {
  ParamStore store;
  Param& a = store.bind_zero("a", {1, 2, 1, 1, 1});
  Param& b = store.bind_zero("b", {1, 2, 1, 1, 1});
  a.value.data() << 1.0, 2.0;
  b.value.data() << 3.0, 4.0;
  b.trainable = false;
  a.grad.data().setConstant(1.0);
  b.grad.data().setConstant(1.0);
  store.adam_step({});
  CHECK(a.value.data()[0] < 1.0);
  CHECK(b.value.data()[0] == 3.0);
  CHECK(b.value.data()[1] == 4.0);
  CHECK_FALSE(b.has_adam_state());
  CHECK(b.adam_steps == 0);
}

TEST_CASE("gradient scaling only touches trainable parameters") {
  ParamStore store;
  Param& a = store.bind_zero("a", {1, 1, 1, 1, 1});
  Param& b = store.bind_zero("b", {1, 1, 1, 1, 1});
  b.trainable = false;
  a.grad.data().setConstant(2.0);
  b.grad.data().setConstant(2.0);
  store.scale_grads(0.25);
  CHECK(a.grad.data()[0] == 0.5);
  CHECK(b.grad.data()[0] == 2.0);
}

TEST_CASE("adam rejects non-finite gradients") {
  ParamStore store;
  Param& p = store.bind_zero("p", {1, 1, 1, 1, 1});
  p.grad.data()[0] = std::nan("");
  CHECK_THROWS_AS(store.adam_step({}), NumericError);
}

TEST_CASE("store checksum covers names and values") {
  ParamStore a, b, c;
  a.bind("p", {1, 2, 1, 1, 1}, [](Tensor& t) { t.data() << 1.0, 2.0; });
  b.bind("p", {1, 2, 1, 1, 1}, [](Tensor& t) { t.data() << 1.0, 2.0; });
  c.bind("q", {1, 2, 1, 1, 1}, [](Tensor& t) { t.data() << 1.0, 2.0; });
  CHECK(a.checksum() == b.checksum());
  CHECK(a.checksum() != c.checksum());

  b.at("p").value.data()[1] = 2.0000001;
  CHECK(a.checksum() != b.checksum());

  // Flags and gradients are not part of the freeze contract.
  const std::uint64_t before = a.checksum();
  a.at("p").trainable = false;
  a.at("p").grad.data().setConstant(9.0);
  CHECK(a.checksum() == before);
}

TEST_CASE("binding validates shapes and lookups report unknown names") {
  ParamStore store;
  store.bind_zero("p", {1, 2, 1, 1, 1});
  Param& again = store.bind("p", {1, 2, 1, 1, 1}, [](Tensor& t) { t.data().setOnes(); });
  CHECK(again.value.data()[0] == 0.0);  // existing entry wins, init skipped
  CHECK_THROWS_AS(store.bind_zero("p", {1, 3, 1, 1, 1}), ShapeError);
  CHECK_THROWS_AS(store.at("missing"), StateError);
}

TEST_CASE("checkpoint survives a save/load round trip with adam state") {
  const fs::path dir = tmp_dir();
  const fs::path f1 = dir / "a.vxc";
  const fs::path f2 = dir / "b.vxc";

  BackboneModel model(tiny_cfg(), make_linear_schedule(10, 0.01, 0.2), {0.0, 4.5}, 77);
  model.store().at("out.b").trainable = false;
  churn(model.store(), 5, 3);
  model.save(f1.string());

  const Checkpoint ck = load_checkpoint(f1.string());
  CHECK(ck.kind == "backbone");
  CHECK(ck.cfg == tiny_cfg());
  CHECK(ck.sched_T == 10);
  CHECK(ck.sched_beta_min == 0.01);
  CHECK(ck.sched_beta_max == 0.2);
  CHECK(ck.norm.lo == 0.0);
  CHECK(ck.norm.hi == 4.5);

  BackboneModel loaded(ck);
  CHECK(loaded.checksum() == model.checksum());
  // Trainable flags are session state: not serialized, so loading restores
  // every parameter as trainable and the caller re-applies any freezing.
  CHECK(loaded.store().at("out.b").trainable);
  loaded.store().at("out.b").trainable = false;
  CHECK(loaded.store().at("stem.w").adam_steps == 3);
  CHECK((loaded.store().at("stem.w").m.data() - model.store().at("stem.w").m.data())
            .abs()
            .maxCoeff() == 0.0);

  // Optimization resumes identically from the restored state.
  churn(model.store(), 6, 2);
  churn(loaded.store(), 6, 2);
  CHECK(loaded.checksum() == model.checksum());

  // Byte fixpoint: load + save reproduces the file exactly.
  save_checkpoint(f2.string(), load_checkpoint(f1.string()));
  CHECK(read_bytes(f1) == read_bytes(f2));
}

TEST_CASE("model predictions survive the round trip bitwise") {
  const fs::path f = tmp_dir() / "predict.vxc";
  BackboneModel model(tiny_cfg(), make_linear_schedule(10, 0.01, 0.2), {0.0, 1.0}, 3);
  churn(model.store(), 8, 2);
  model.save(f.string());
  BackboneModel loaded = BackboneModel::load(f.string());

  const Volume x_t = Volume::constant({4, 4, 4}, 0.3);
  const Volume y = Volume::constant({4, 4, 4}, 0.8);
  const Volume p1 = model.predict(x_t, 4, y, nullptr);
  const Volume p2 = loaded.predict(x_t, 4, y, nullptr);
  CHECK(p1.data().abs().maxCoeff() > 0.0);
  CHECK((p1.data() - p2.data()).abs().maxCoeff() == 0.0);

  const SubbandSet bands;
  CHECK_THROWS_AS(model.predict(x_t, 4, y, &bands), UsageError);
}

TEST_CASE("checkpoint file corruption is reported") {
  const fs::path dir = tmp_dir();
  const fs::path good = dir / "good.vxc";
  BackboneModel model(tiny_cfg(), make_linear_schedule(10, 0.01, 0.2), {0.0, 1.0}, 1);
  model.save(good.string());
  const std::string bytes = read_bytes(good);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint((dir / "nope.vxc").string()), IoError);
  }
  SUBCASE("wrong magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    const fs::path f = dir / "magic.vxc";
    write_bytes(f, bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(f.string()),
                         doctest::Contains("not a VXC1"), FormatError);
  }
  SUBCASE("unsupported version") {
    std::string bad = bytes;
    bad[4] = char(0x7f);
    const fs::path f = dir / "version.vxc";
    write_bytes(f, bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(f.string()),
                         doctest::Contains("unsupported checkpoint version"), FormatError);
  }
  SUBCASE("truncated payload") {
    const fs::path f = dir / "trunc.vxc";
    write_bytes(f, bytes.substr(0, bytes.size() - 64));
    CHECK_THROWS_WITH_AS(load_checkpoint(f.string()), doctest::Contains("truncated"),
                         FormatError);
  }
  SUBCASE("truncated manifest") {
    const fs::path f = dir / "trunc2.vxc";
    write_bytes(f, bytes.substr(0, 32));
    CHECK_THROWS_WITH_AS(load_checkpoint(f.string()), doctest::Contains("truncated"),
                         FormatError);
  }
  SUBCASE("trailing bytes") {
    const fs::path f = dir / "trail.vxc";
    write_bytes(f, bytes + "x");
    CHECK_THROWS_WITH_AS(load_checkpoint(f.string()),
                         doctest::Contains("trailing bytes"), FormatError);
  }
  SUBCASE("unknown kind") {
    Checkpoint ck = load_checkpoint(good.string());
    ck.kind = "wibble";
    const fs::path f = dir / "kind.vxc";
    save_checkpoint(f.string(), ck);
    CHECK_THROWS_WITH_AS(load_checkpoint(f.string()),
                         doctest::Contains("unknown checkpoint kind"), FormatError);
  }
}

TEST_CASE("checkpoint and config must describe the same parameter set") {
  const fs::path good = tmp_dir() / "verify.vxc";
  BackboneModel model(tiny_cfg(), make_linear_schedule(10, 0.01, 0.2), {0.0, 1.0}, 2);
  model.save(good.string());

  SUBCASE("entry missing for a parameter the net creates") {
    Checkpoint ck = load_checkpoint(good.string());
    ck.entries.erase(ck.entries.begin());
    CHECK_THROWS_WITH_AS(BackboneModel{ck},
                         doctest::Contains("missing parameter required by config"),
                         FormatError);
  }
  SUBCASE("duplicate entries collapse and are flagged as unused") {
    Checkpoint ck = load_checkpoint(good.string());
    ck.entries.push_back(ck.entries.front());
    CHECK_THROWS_WITH_AS(BackboneModel{ck},
                         doctest::Contains("parameters not used by config"), FormatError);
  }
  SUBCASE("branch checkpoint rejected by the backbone loader") {
    Checkpoint ck = load_checkpoint(good.string());
    ck.kind = "branch";
    CHECK_THROWS_WITH_AS(BackboneModel{ck}, doctest::Contains("expected a backbone"),
                         FormatError);
  }
  SUBCASE("config incompatible with stored shapes") {
    Checkpoint ck = load_checkpoint(good.string());
    ck.cfg.base_channels = 8;
    CHECK_THROWS_AS(BackboneModel{ck}, ShapeError);
  }
  SUBCASE("populate requires an empty store") {
    const Checkpoint ck = load_checkpoint(good.string());
    ParamStore store;
    store.bind_zero("junk", {1, 1, 1, 1, 1});
    CHECK_THROWS_AS(ck.populate(store), StateError);
  }
}
