#include "genrefuse/config.hpp"

#include <fstream>
#include <sstream>

#include "genrefuse/graph.hpp"
#include "genrefuse/optim.hpp"
#include "json.hpp"

namespace genrefuse {

using nlohmann::ordered_json;

namespace {

template <typename V>
void read_field(const ordered_json& obj, const char* section, const char* key, V& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<V>();
  } catch (const ordered_json::exception& e) {
    throw ConfigError(std::string("config ") + section + "." + key + ": " + e.what());
  }
}

void reject_unknown(const ordered_json& obj, const char* section, std::initializer_list<const char*> keys) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError(std::string("config: unknown key ") + section + "." + it.key());
  }
}

const ordered_json& section(const ordered_json& root, const char* name) {
  static const ordered_json empty = ordered_json::object();
  if (!root.contains(name)) return empty;
  if (!root.at(name).is_object()) throw ConfigError(std::string("config: section ") + name + " must be an object");
  return root.at(name);
}

}  // namespace

std::string RunConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["data_dir"] = data_dir;
  j["out_dir"] = out_dir;
  j["model"] = {{"n_mels", model.n_mels},       {"channels", model.channels},     {"embed_dim", model.embed_dim},
                {"embed_seed", model.embed_seed}, {"lyrics_dim", model.lyrics_dim}, {"attn_dim", model.attn_dim},
                {"heads", model.heads},         {"fused_dim", model.fused_dim},   {"gcn_hidden", model.gcn_hidden},
                {"gcn_layers", model.gcn_layers}, {"denominator", model.denominator},
                {"lyric_length", model.lyric_length}};
  j["loss"] = {{"lambda", loss.lambda}, {"tau_init", loss.tau_init}, {"proj_dim", loss.proj_dim},
               {"normalize", loss.normalize}};
  j["train"] = {{"optimizer", train.optimizer},     {"lr", train.lr},
                {"halve_every", train.halve_every}, {"batch_size", train.batch_size},
                {"epochs", train.epochs},           {"patience", train.patience},
                {"threshold", train.threshold},     {"split_seed", train.split_seed},
                {"split", {train.split_train, train.split_val, train.split_test}}};
  j["ablation"] = {{"use_al_loss", ablation.use_al_loss}, {"use_scma", ablation.use_scma},
                   {"use_gcem", ablation.use_gcem}};
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown(j, "", {"seed", "data_dir", "out_dir", "model", "loss", "train", "ablation"});
  RunConfig c;
  read_field(j, "", "seed", c.seed);
  read_field(j, "", "data_dir", c.data_dir);
  read_field(j, "", "out_dir", c.out_dir);

  const auto& m = section(j, "model");
  reject_unknown(m, "model", {"n_mels", "channels", "embed_dim", "embed_seed", "lyrics_dim", "attn_dim", "heads",
                              "fused_dim", "gcn_hidden", "gcn_layers", "denominator", "lyric_length"});
  read_field(m, "model", "n_mels", c.model.n_mels);
  read_field(m, "model", "channels", c.model.channels);
  read_field(m, "model", "embed_dim", c.model.embed_dim);
  read_field(m, "model", "embed_seed", c.model.embed_seed);
  read_field(m, "model", "lyrics_dim", c.model.lyrics_dim);
  read_field(m, "model", "attn_dim", c.model.attn_dim);
  read_field(m, "model", "heads", c.model.heads);
  read_field(m, "model", "fused_dim", c.model.fused_dim);
  read_field(m, "model", "gcn_hidden", c.model.gcn_hidden);
  read_field(m, "model", "gcn_layers", c.model.gcn_layers);
  read_field(m, "model", "denominator", c.model.denominator);
  read_field(m, "model", "lyric_length", c.model.lyric_length);

  const auto& l = section(j, "loss");
  reject_unknown(l, "loss", {"lambda", "tau_init", "proj_dim", "normalize"});
  read_field(l, "loss", "lambda", c.loss.lambda);
  read_field(l, "loss", "tau_init", c.loss.tau_init);
  read_field(l, "loss", "proj_dim", c.loss.proj_dim);
  read_field(l, "loss", "normalize", c.loss.normalize);

  const auto& t = section(j, "train");
  reject_unknown(t, "train", {"optimizer", "lr", "halve_every", "batch_size", "epochs", "patience", "threshold",
                              "split_seed", "split"});
  read_field(t, "train", "optimizer", c.train.optimizer);
  read_field(t, "train", "lr", c.train.lr);
  read_field(t, "train", "halve_every", c.train.halve_every);
  read_field(t, "train", "batch_size", c.train.batch_size);
  read_field(t, "train", "epochs", c.train.epochs);
  read_field(t, "train", "patience", c.train.patience);
  read_field(t, "train", "threshold", c.train.threshold);
  read_field(t, "train", "split_seed", c.train.split_seed);
  if (t.contains("split")) {
    std::vector<double> r;
    read_field(t, "train", "split", r);
    if (r.size() != 3) throw ConfigError("config train.split must be [train, val, test]");
    c.train.split_train = r[0];
    c.train.split_val = r[1];
    c.train.split_test = r[2];
  }

  const auto& a = section(j, "ablation");
  reject_unknown(a, "ablation", {"use_al_loss", "use_scma", "use_gcem"});
  read_field(a, "ablation", "use_al_loss", c.ablation.use_al_loss);
  read_field(a, "ablation", "use_scma", c.ablation.use_scma);
  read_field(a, "ablation", "use_gcem", c.ablation.use_gcem);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_json() << "\n";
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  require(loss.lambda >= 0.0 && loss.lambda <= 1.0, "loss.lambda must lie in [0, 1]");
  require(loss.tau_init >= 0.01 && loss.tau_init <= 1.0, "loss.tau_init must lie in [0.01, 1]");
  require(loss.proj_dim > 0, "loss.proj_dim must be positive");
  require(!model.channels.empty(), "model.channels must not be empty");
  for (const auto ch : model.channels) require(ch > 0, "model.channels entries must be positive");
  require(model.n_mels > 0 && model.embed_dim > 0 && model.lyrics_dim > 0 && model.fused_dim > 0 &&
              model.gcn_hidden > 0 && model.lyric_length > 0,
          "model widths must be positive");
  require(model.heads > 0 && model.attn_dim % model.heads == 0, "model.attn_dim must be a multiple of model.heads");
  require(model.gcn_layers >= 1, "model.gcn_layers must be at least 1");
  parse_denominator_mode(model.denominator);
  parse_optimizer_kind(train.optimizer);
  require(train.lr > 0, "train.lr must be positive");
  require(train.halve_every > 0, "train.halve_every must be positive");
  require(train.batch_size > 0, "train.batch_size must be positive");
  require(train.threshold > 0 && train.threshold < 1, "train.threshold must lie in (0, 1)");
  split(std::vector<std::string>{}, split_ratios(), 0);
}

void RunConfig::apply_ablation(const std::string& list) {
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "al-loss") {
      ablation.use_al_loss = false;
    } else if (item == "scma") {
      ablation.use_scma = false;
    } else if (item == "gcem") {
      ablation.use_gcem = false;
    } else {
      throw ConfigError("unknown ablation '" + item + "' (expected al-loss, scma or gcem)");
    }
  }
}

}  // namespace genrefuse
