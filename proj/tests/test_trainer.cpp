#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "dynaconf/synthetic.hpp"
#include "dynaconf/trainer.hpp"

using namespace dynaconf;

namespace {

ModelSpec small_spec(int P = 1, int E = 2, int D = 4, int B = 1) {
  ModelSpec s;
  s.cond.encoder.variant = EncoderVariant::kPointwise;
  s.cond.encoder.window = B;
  s.cond.encoder.target_dim = P;
  s.cond.encoder.hidden = D;
  s.cond.latent = E;
  s.dyn.groups = P;
  s.dyn.group_dim = E;
  return s;
}

Series stationary_ar1(int T, double w, std::uint64_t seed) {
  Series s = Series::zeros(T, 1);
  Rng rng(seed);
  double y = 0.0;
  for (int b = 0; b < 100; ++b) y = w * y + rng.normal();
  for (int t = 0; t < T; ++t) {
    y = w * y + rng.normal();
    s.at(t, 0) = y;
  }
  return s;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

bool stores_equal(const ParameterStore& a, const ParameterStore& b) {
  if (a.count() != b.count()) return false;
  for (int i = 0; i < a.count(); ++i)
    if (a.value(i).data != b.value(i).data) return false;
  return true;
}

}  // namespace

TEST_CASE("subsample_dims: identity, bounds, uniformity") {
  Rng rng(1);
  auto all = subsample_dims(4, 4, rng);
  CHECK(all == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_AS(subsample_dims(4, 5, rng), ContractViolation);
  CHECK_THROWS_AS(subsample_dims(4, 0, rng), ContractViolation);

  std::vector<int> counts(4, 0);
  const int reps = 40000;
  for (int r = 0; r < reps; ++r) counts[subsample_dims(4, 1, rng)[0]]++;
  for (int c : counts) CHECK(static_cast<double>(c) / reps == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("subsample_dims: rescaled subset loss is unbiased for the full loss") {
  Rng rng(2);
  const int P = 6, k = 2;
  std::vector<double> losses(P);
  for (auto& v : losses) v = rng.uniform(0.0, 3.0);
  double full = std::accumulate(losses.begin(), losses.end(), 0.0);
  double acc = 0.0;
  const int reps = 10000;
  for (int r = 0; r < reps; ++r) {
    auto idx = subsample_dims(P, k, rng);
    double sub = 0.0;
    for (int i : idx) sub += losses[i];
    acc += sub * (static_cast<double>(P) / k);
  }
  CHECK(acc / reps == doctest::Approx(full).epsilon(0.01));
}

TEST_CASE("staticonf training recovers the AR(1) coefficient against the OLS oracle") {
  Series data = stationary_ar1(1300, 0.5, 7);
  SplitSpec split{1000, 1300};

  // closed-form OLS on the same training data, computed first
  double num = 0.0, den = 0.0;
  for (int t = 1; t < 1000; ++t) {
    num += data.at(t, 0) * data.at(t - 1, 0);
    den += data.at(t - 1, 0) * data.at(t - 1, 0);
  }
  double w_ols = num / den;
  CHECK(w_ols == doctest::Approx(0.5).epsilon(0.12));

  TrainConfig cfg;
  cfg.max_epochs = 150;
  cfg.patience = 40;
  cfg.seed = 11;
  auto ck = train_staticonf(data, split, small_spec(), cfg);
  CHECK_FALSE(ck.diverged);

  // fitted slope of the learned one-step mean over the training inputs
  const auto& cond = *ck.cond;
  auto b_phi = ck.dyn->b_phi();
  double mnum = 0.0, mden = 0.0;
  for (int t = 1; t < 1000; ++t) {
    auto h = cond.encode_values(make_window(data, t, 1));
    auto z = cond.project_values(h, 0);
    double mu = cond.mu_value(z, b_phi, 0);
    mnum += mu * data.at(t - 1, 0);
    mden += data.at(t - 1, 0) * data.at(t - 1, 0);
  }
  double w_model = mnum / mden;
  CHECK(w_model > 0.45);
  CHECK(w_model < 0.55);
  CHECK(std::abs(w_model - w_ols) < 0.06);
}

TEST_CASE("staticonf loss trends down over the first epochs") {
  Series data = stationary_ar1(600, 0.5, 13);
  SplitSpec split{400, 600};
  TrainConfig cfg;
  cfg.max_epochs = 10;
  cfg.patience = 50;
  cfg.seed = 17;
  auto ck = train_staticonf(data, split, small_spec(), cfg);
  REQUIRE(ck.epoch_losses.size() == 10);
  double head = (ck.epoch_losses[0] + ck.epoch_losses[1] + ck.epoch_losses[2]) / 3.0;
  double tail = (ck.epoch_losses[7] + ck.epoch_losses[8] + ck.epoch_losses[9]) / 3.0;
  CHECK(tail < head);
}

TEST_CASE("staticonf with lr = 0 leaves parameters unchanged") {
  Series data = stationary_ar1(300, 0.5, 19);
  SplitSpec split{200, 300};
  ModelSpec spec = small_spec();
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.lr = 0.0;
  cfg.seed = 23;
  auto ck = train_staticonf(data, split, spec, cfg);

  Rng ref_master(cfg.seed);
  Rng init_rng = ref_master.child(1);
  ConditionalModel fresh(spec.cond, init_rng);
  CHECK(stores_equal(ck.cond->params(), fresh.params()));
}

TEST_CASE("identical seed and config give bit-identical checkpoints") {
  Series data = stationary_ar1(400, 0.5, 29);
  SplitSpec split{300, 400};
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.seed = 31;
  auto a = train_staticonf(data, split, small_spec(), cfg);
  auto b = train_staticonf(data, split, small_spec(), cfg);
  CHECK(stores_equal(a.cond->params(), b.cond->params()));
  CHECK(stores_equal(a.dyn->params(), b.dyn->params()));
  CHECK(a.rng_state == b.rng_state);
  CHECK(a.epoch_losses == b.epoch_losses);

  auto dir = std::filesystem::temp_directory_path();
  save_checkpoint(a, dir / "ck_a.bin");
  save_checkpoint(b, dir / "ck_b.bin");
  CHECK(file_bytes(dir / "ck_a.bin") == file_bytes(dir / "ck_b.bin"));
  std::filesystem::remove(dir / "ck_a.bin");
  std::filesystem::remove(dir / "ck_b.bin");
}

TEST_CASE("checkpoint round-trips bit-exactly and resumes training seamlessly") {
  Series data = stationary_ar1(400, 0.5, 37);
  SplitSpec split{300, 400};
  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.patience = 100;
  cfg.seed = 41;

  // uninterrupted run
  auto full = train_staticonf(data, split, small_spec(), cfg);

  // stop at 2, save, load, resume to 4
  TrainConfig cfg2 = cfg;
  cfg2.max_epochs = 2;
  auto half = train_staticonf(data, split, small_spec(), cfg2);
  auto dir = std::filesystem::temp_directory_path();
  save_checkpoint(half, dir / "ck_half.bin");
  auto loaded = load_checkpoint(dir / "ck_half.bin");
  CHECK(stores_equal(loaded.cond->params(), half.cond->params()));
  CHECK(stores_equal(loaded.dyn->params(), half.dyn->params()));
  CHECK(loaded.rng_state == half.rng_state);
  CHECK(loaded.epoch == 2);

  // double round-trip gives identical bytes
  save_checkpoint(loaded, dir / "ck_half2.bin");
  CHECK(file_bytes(dir / "ck_half.bin") == file_bytes(dir / "ck_half2.bin"));

  auto resumed = train_staticonf(data, split, small_spec(), cfg, &loaded);
  REQUIRE(resumed.epoch_losses.size() == full.epoch_losses.size());
  CHECK(resumed.epoch_losses[2] == full.epoch_losses[2]);
  CHECK(resumed.epoch_losses[3] == full.epoch_losses[3]);
  CHECK(stores_equal(resumed.cond->params(), full.cond->params()));
  std::filesystem::remove(dir / "ck_half.bin");
  std::filesystem::remove(dir / "ck_half2.bin");
}

TEST_CASE("phase alternation isolates the inactive parameter sets") {
  Series data = stationary_ar1(200, 0.5, 43);
  ModelSpec spec = small_spec();
  Rng init(44);
  ConditionalModel cond(spec.cond, init);
  DynamicsModel dyn(spec.dyn);
  auto post = make_posterior(spec.posterior, dyn.control_dim(), 199, init);
  Adam a_cond(cond.params()), a_dyn(dyn.params()), a_post(post->params());
  TrainConfig cfg;
  cfg.updates_per_epoch = 3;
  cfg.batch_len = 16;
  Rng rng(45);

  auto dyn_before = dyn.params().value(0).data;
  auto post_before = post->params().value(0).data;
  dynaconf_phase_a_epoch(data, 200, cond, dyn, *post, a_cond, cfg, 1e-3, rng);
  CHECK(dyn.params().value(0).data == dyn_before);
  CHECK(post->params().value(0).data == post_before);

  auto cond_snapshot = cond.params().value(0).data;
  dynaconf_phase_b_epoch(data, 200, cond, dyn, *post, a_dyn, a_post, cfg, 1e-3, rng);
  CHECK(cond.params().value(0).data == cond_snapshot);
  CHECK(post->params().value(0).data != post_before);
}

TEST_CASE("dynaconf training improves its objective and can freeze the encoder") {
  SyntheticSpec sp;
  sp.kind = ProcessKind::kAr1Dynamic;
  sp.length = 500;
  sp.seed = 47;
  Rng grng(sp.seed);
  auto g = generate(sp, grng);
  SplitSpec split{300, 400};

  TrainConfig scfg;
  scfg.max_epochs = 25;
  scfg.patience = 8;
  scfg.seed = 53;
  auto static_ck = train_staticonf(g.series, split, small_spec(), scfg);

  TrainConfig dcfg;
  dcfg.max_epochs = 20;
  dcfg.patience = 30;
  dcfg.seed = 59;
  dcfg.freeze_encoder = true;
  auto dyn_ck = train_dynaconf(g.series, split, dcfg, static_ck);
  CHECK_FALSE(dyn_ck.diverged);
  REQUIRE(dyn_ck.epoch_losses.size() >= 10);
  // the (negative) objective trends down
  double head = dyn_ck.epoch_losses[0] + dyn_ck.epoch_losses[1];
  double tail = dyn_ck.epoch_losses[dyn_ck.epoch_losses.size() - 1] +
                dyn_ck.epoch_losses[dyn_ck.epoch_losses.size() - 2];
  CHECK(tail < head);

  // frozen encoder weights stay bit-identical to the static checkpoint
  int enc_w = static_ck.cond->params().find("enc.w");
  REQUIRE(enc_w >= 0);
  CHECK(dyn_ck.cond->params().value(enc_w).data ==
        static_ck.cond->params().value(enc_w).data);
  // non-encoder conditional parameters did move
  int proj_w = static_ck.cond->params().find("proj.w.0");
  CHECK(dyn_ck.cond->params().value(proj_w).data !=
        static_ck.cond->params().value(proj_w).data);
}

TEST_CASE("divergence aborts with the last finite state") {
  Series data = stationary_ar1(300, 0.5, 61);
  // an unexplainable spike overflows the squared residual in the loss
  data.at(150, 0) = 1e160;
  SplitSpec split{200, 300};
  TrainConfig cfg;
  cfg.max_epochs = 30;
  cfg.seed = 67;
  auto ck = train_staticonf(data, split, small_spec(), cfg);
  CHECK(ck.diverged);
  for (int i = 0; i < ck.cond->params().count(); ++i)
    for (double v : ck.cond->params().value(i).data) CHECK(std::isfinite(v));
}
