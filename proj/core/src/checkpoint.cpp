#include "dynaconf/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "dynaconf/errors.hpp"
#include "json.hpp"

namespace dynaconf {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'D', 'C', 'F', 'C', 'K', 'P', 'T', '\n'};

void write_f64_le(std::ostream& out, const std::vector<double>& v) {
  for (double d : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
}

std::vector<double> read_f64_le(std::istream& in, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &bits, 8);
    v[k] = d;
  }
  return v;
}

json encoder_to_json(const EncoderConfig& e) {
  return {{"variant", to_string(e.variant)}, {"window", e.window},
          {"target_dim", e.target_dim},     {"covariate_dim", e.covariate_dim},
          {"hidden", e.hidden},             {"mlp_layers", e.mlp_layers},
          {"lstm_layers", e.lstm_layers}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig e;
  e.variant = encoder_variant_from_string(j.at("variant").get<std::string>());
  e.window = j.at("window").get<int>();
  e.target_dim = j.at("target_dim").get<int>();
  e.covariate_dim = j.at("covariate_dim").get<int>();
  e.hidden = j.at("hidden").get<int>();
  e.mlp_layers = j.at("mlp_layers").get<int>();
  e.lstm_layers = j.at("lstm_layers").get<int>();
  return e;
}

json spec_to_json(const ModelSpec& s) {
  return {{"encoder", encoder_to_json(s.cond.encoder)},
          {"latent", s.cond.latent},
          {"dyn",
           {{"groups", s.dyn.groups},
            {"group_dim", s.dyn.group_dim},
            {"per_group", s.dyn.per_group},
            {"init_lambda", s.dyn.init_lambda},
            {"init_var0", s.dyn.init_var0},
            {"init_vard", s.dyn.init_vard}}},
          {"posterior",
           {{"kind", s.posterior.kind},
            {"iaf_layers", s.posterior.iaf_layers},
            {"iaf_hidden", s.posterior.iaf_hidden},
            {"iaf_embed", s.posterior.iaf_embed}}}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.cond.encoder = encoder_from_json(j.at("encoder"));
  s.cond.latent = j.at("latent").get<int>();
  const json& d = j.at("dyn");
  s.dyn.groups = d.at("groups").get<int>();
  s.dyn.group_dim = d.at("group_dim").get<int>();
  s.dyn.per_group = d.at("per_group").get<bool>();
  s.dyn.init_lambda = d.at("init_lambda").get<double>();
  s.dyn.init_var0 = d.at("init_var0").get<double>();
  s.dyn.init_vard = d.at("init_vard").get<double>();
  const json& p = j.at("posterior");
  s.posterior.kind = p.at("kind").get<std::string>();
  s.posterior.iaf_layers = p.at("iaf_layers").get<int>();
  s.posterior.iaf_hidden = p.at("iaf_hidden").get<int>();
  s.posterior.iaf_embed = p.at("iaf_embed").get<int>();
  return s;
}

struct BlobWriter {
  json dir = json::array();
  std::vector<double> data;

  void add(const std::string& name, const Tensor& t) {
    dir.push_back({{"name", name}, {"shape", t.shape}, {"offset", data.size()},
                   {"count", t.data.size()}});
    data.insert(data.end(), t.data.begin(), t.data.end());
  }
  void add_store(const std::string& prefix, const ParameterStore& ps) {
    for (int i = 0; i < ps.count(); ++i) add(prefix + ps.name(i), ps.value(i));
  }
  void add_adam(const std::string& prefix, Adam& a, const ParameterStore& ps) {
    for (int i = 0; i < ps.count(); ++i) {
      add(prefix + "m." + ps.name(i), a.moments1()[i]);
      add(prefix + "v." + ps.name(i), a.moments2()[i]);
    }
  }
};

struct BlobReader {
  json dir;
  std::vector<double> data;

  const json* find(const std::string& name) const {
    for (const auto& e : dir)
      if (e.at("name").get<std::string>() == name) return &e;
    return nullptr;
  }
  void load_into(const std::string& name, Tensor& t) const {
    const json* e = find(name);
    if (!e) throw DataError("checkpoint: missing blob " + name);
    std::size_t off = (*e).at("offset").get<std::size_t>();
    std::size_t cnt = (*e).at("count").get<std::size_t>();
    if (cnt != t.data.size())
      throw DataError("checkpoint: blob size mismatch for " + name);
    std::copy(data.begin() + off, data.begin() + off + cnt, t.data.begin());
  }
  void load_store(const std::string& prefix, ParameterStore& ps) const {
    for (int i = 0; i < ps.count(); ++i) load_into(prefix + ps.name(i), ps.value(i));
  }
  void load_adam(const std::string& prefix, Adam& a, const ParameterStore& ps) const {
    for (int i = 0; i < ps.count(); ++i) {
      load_into(prefix + "m." + ps.name(i), a.moments1()[i]);
      load_into(prefix + "v." + ps.name(i), a.moments2()[i]);
    }
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& file) {
  if (!ck.cond || !ck.dyn) throw ContractViolation("save_checkpoint: empty bundle");
  BlobWriter blobs;
  blobs.add_store("cond.", ck.cond->params());
  blobs.add_store("dyn.", ck.dyn->params());
  if (ck.posterior) blobs.add_store("post.", ck.posterior->params());
  if (ck.adam_cond) blobs.add_adam("adam.cond.", *ck.adam_cond, ck.cond->params());
  if (ck.adam_dyn) blobs.add_adam("adam.dyn.", *ck.adam_dyn, ck.dyn->params());
  if (ck.adam_post && ck.posterior)
    blobs.add_adam("adam.post.", *ck.adam_post, ck.posterior->params());

  json header;
  header["model_kind"] = ck.model_kind;
  header["spec"] = spec_to_json(ck.spec);
  header["config_hash"] = ck.config_hash;
  header["seed"] = ck.seed;
  header["epoch"] = ck.epoch;
  header["train_end"] = ck.train_end;
  header["diverged"] = ck.diverged;
  header["epoch_losses"] = ck.epoch_losses;
  header["rng_state"] = ck.rng_state;
  header["has_posterior"] = static_cast<bool>(ck.posterior);
  header["adam_steps"] = {
      {"cond", ck.adam_cond ? ck.adam_cond->step_count() : 0},
      {"dyn", ck.adam_dyn ? ck.adam_dyn->step_count() : 0},
      {"post", ck.adam_post ? ck.adam_post->step_count() : 0}};
  header["blobs"] = blobs.dir;
  std::string hs = header.dump();

  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + file.string());
  out.write(kMagic, 8);
  std::uint32_t version = Checkpoint::kVersion;
  std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&version), 4);
  unsigned char lb[8];
  for (int i = 0; i < 8; ++i) lb[i] = static_cast<unsigned char>(hlen >> (8 * i));
  out.write(reinterpret_cast<const char*>(lb), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  write_f64_le(out, blobs.data);
  if (!out) throw DataError("failed writing checkpoint: " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + file.string());
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + file.string());
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != Checkpoint::kVersion)
    throw DataError("unsupported checkpoint version");
  unsigned char lb[8];
  in.read(reinterpret_cast<char*>(lb), 8);
  std::uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) hlen |= static_cast<std::uint64_t>(lb[i]) << (8 * i);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  json header = json::parse(hs);

  BlobReader blobs;
  blobs.dir = header.at("blobs");
  std::size_t total = 0;
  for (const auto& e : blobs.dir)
    total = std::max(total, e.at("offset").get<std::size_t>() + e.at("count").get<std::size_t>());
  blobs.data = read_f64_le(in, total);
  if (!in) throw DataError("truncated checkpoint: " + file.string());

  Checkpoint ck;
  ck.model_kind = header.at("model_kind").get<std::string>();
  ck.spec = spec_from_json(header.at("spec"));
  ck.config_hash = header.at("config_hash").get<std::uint64_t>();
  ck.seed = header.at("seed").get<std::uint64_t>();
  ck.epoch = header.at("epoch").get<int>();
  ck.train_end = header.at("train_end").get<int>();
  ck.diverged = header.at("diverged").get<bool>();
  ck.epoch_losses = header.at("epoch_losses").get<std::vector<double>>();
  ck.rng_state = header.at("rng_state").get<std::string>();

  Rng scratch(0);
  ck.cond = std::make_shared<ConditionalModel>(ck.spec.cond, scratch);
  ck.dyn = std::make_shared<DynamicsModel>(ck.spec.dyn);
  blobs.load_store("cond.", ck.cond->params());
  blobs.load_store("dyn.", ck.dyn->params());
  if (header.at("has_posterior").get<bool>()) {
    int horizon = ck.train_end - ck.spec.cond.encoder.window;
    auto post = make_posterior(ck.spec.posterior, ck.dyn->control_dim(), horizon, scratch);
    blobs.load_store("post.", post->params());
    ck.posterior = std::move(post);
  }
  ck.adam_cond = std::make_shared<Adam>(ck.cond->params());
  ck.adam_dyn = std::make_shared<Adam>(ck.dyn->params());
  if (blobs.find("adam.cond.m." + ck.cond->params().name(0)))
    blobs.load_adam("adam.cond.", *ck.adam_cond, ck.cond->params());
  if (blobs.find("adam.dyn.m." + ck.dyn->params().name(0)))
    blobs.load_adam("adam.dyn.", *ck.adam_dyn, ck.dyn->params());
  if (ck.posterior) {
    ck.adam_post = std::make_shared<Adam>(ck.posterior->params());
    if (blobs.find("adam.post.m." + ck.posterior->params().name(0)))
      blobs.load_adam("adam.post.", *ck.adam_post, ck.posterior->params());
  }
  ck.adam_cond->set_step_count(header.at("adam_steps").at("cond").get<std::int64_t>());
  ck.adam_dyn->set_step_count(header.at("adam_steps").at("dyn").get<std::int64_t>());
  if (ck.adam_post)
    ck.adam_post->set_step_count(header.at("adam_steps").at("post").get<std::int64_t>());
  return ck;
}

}  // namespace dynaconf
