// SPDX-License-Identifier: Apache-2.0
//
// Flat `section.key = value` settings shared by the command-line driver.
#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "takd/error.hpp"
#include "takd/synth.hpp"
#include "takd/train.hpp"

namespace takd::cli {

struct Key {
  std::string name;
  std::string fallback;
  std::string help;
};

inline const std::vector<Key>& schema() {
  static const std::vector<Key> keys{
      {"run.seed", "1", "seed for data generation, initialization and batching"},
      {"run.preset", "desk", "desk (batch 16, 60 epochs, reduced lr) or full (batch 128, 200 epochs)"},
      {"run.holdout", "last", "held-out subject id, 'last', or 'none'"},
      {"data.subjects", "6", "number of synthetic subjects"},
      {"data.window", "100", "window length W (100 or 200)"},
      {"data.windows_per_trial", "8", "windows per (subject, speed) trial"},
      {"data.speeds", "SW,BW", "comma-separated subset of SW,RW,BW,FW"},
      {"data.reference_layout", "false", "drop the four trials absent from the reference collection"},
      {"data.refit", "false", "recompute min-max constants on the training subjects of a LOSO split"},
      {"model.encoder", "c3d", "teacher encoder: c3d, i3d or r2p1d"},
      {"train.epochs", "auto", "epochs (auto: from run.preset)"},
      {"train.batch", "auto", "batch size (auto: from run.preset)"},
      {"train.lr", "auto", "learning rate (auto: from run.preset and encoder)"},
      {"train.objective", "ae", "teacher objective: ae, wae or vae"},
      {"train.strategy", "1", "teacher strategy 1, 2 or 3"},
      {"train.adv_weight", "1", "WAE adversarial weight"},
      {"train.disc_lr", "0.001", "WAE discriminator learning rate"},
      {"train.wae_literal", "false", "WAE discriminator loss with the encoding term only"},
      {"train.kl_weight", "1", "VAE KL weight"},
      {"train.select_best", "true", "restore the best-by-validation weights after training"},
      {"distill.preset", "takd-dagger", "scratch, takd, takd-dagger, takd-ddagger, sp, bs-ch, kd or at"},
      {"loss.lambda1", "0.01", "weight of the Mid group"},
      {"loss.lambda2", "0.1", "weight of the intermediate group"},
      {"loss.kappa", "0.1", "weight of temporal and channel terms"},
      {"loss.contrastive", "0.1", "contrastive weight for strategies 2 and 3"},
      {"loss.alpha", "1", "KD / AT baseline weight"},
      {"loss.tau", "4", "unused by the regression baselines"},
      {"eval.bins", "15", "ECE bins"},
      {"eval.units", "normalized", "normalized or bodyweight (percent)"},
      {"eval.curves", "1", "curve files per (subject, speed)"},
  };
  return keys;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class Settings {
 public:
  Settings() {
    for (const auto& k : schema()) values_[k.name] = k.fallback;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
    explicit_.insert(key);
  }

  /// `key=value` as given to --set.
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  /// `key = value` lines, `#` comments, optional `[section]` headers prefixing bare keys.
  void load_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    std::string line, section;
    for (std::size_t no = 1; std::getline(is, line); ++no) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(path.string() + ":" + std::to_string(no) + ": bad section");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path.string() + ":" + std::to_string(no) + ": expected key = value");
      auto key = trim(line.substr(0, eq));
      if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
      try {
        set(key, trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ":" + std::to_string(no) + ": " + e.what());
      }
    }
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }
  bool is_auto(const std::string& key) const { return get(key) == "auto"; }
  bool was_set(const std::string& key) const { return explicit_.count(key) > 0; }

  long long get_int(const std::string& key, long long lo, long long hi) const {
    const auto& s = get(key);
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || v < lo || v > hi)
      throw ConfigError(key + " = '" + s + "' is not an integer in [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
    return v;
  }
  double get_double(const std::string& key) const {
    const auto& s = get(key);
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used == s.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(key + " = '" + s + "' is not a number");
  }
  bool get_bool(const std::string& key) const {
    const auto s = canonical_name(get(key));
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(key + " = '" + get(key) + "' is not a boolean");
  }

  /// Fully resolved settings, one `key = value` per line in schema order.
  std::string dump() const {
    std::ostringstream os;
    for (const auto& k : schema()) os << k.name << " = " << values_.at(k.name) << '\n';
    return os.str();
  }
  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& k : schema()) j[k.name] = values_.at(k.name);
    return j;
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

inline std::vector<gait::Speed> parse_speed_list(const std::string& s) {
  std::vector<gait::Speed> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::transform(item.begin(), item.end(), item.begin(), [](unsigned char c) { return std::toupper(c); });
    const auto sp = gait::parse_speed(item);
    if (std::find(out.begin(), out.end(), sp) != out.end()) throw ConfigError("speed " + item + " listed twice");
    out.push_back(sp);
  }
  if (out.empty()) throw ConfigError("data.speeds is empty");
  return out;
}

inline synth::GenerateOptions generate_options(const Settings& s) {
  synth::GenerateOptions o;
  o.n_subjects = static_cast<int>(s.get_int("data.subjects", 2, 64));
  o.window = static_cast<std::size_t>(s.get_int("data.window", 1, 100000));
  o.windows_per_trial = static_cast<std::size_t>(s.get_int("data.windows_per_trial", 1, 100000));
  o.speeds = parse_speed_list(s.get("data.speeds"));
  o.reference_layout = s.get_bool("data.reference_layout");
  o.seed = static_cast<std::uint64_t>(s.get_int("run.seed", 0, std::numeric_limits<long long>::max()));
  return o;
}

/// Maps the preset names accepted on the command line onto method names.
inline std::string distill_method(const std::string& preset) {
  auto m = canonical_name(preset);
  if (m == "sp") m = "sp-mid";
  return m;
}

inline train::TrainConfig train_config(const Settings& s, EncoderKind lr_kind) {
  const auto preset = canonical_name(s.get("run.preset"));
  train::TrainConfig c;
  if (preset == "desk")
    c = train::TrainConfig::desk(lr_kind);
  else if (preset == "full")
    c.lr = train::default_lr(lr_kind);
  else
    throw ConfigError("run.preset must be desk or full, got '" + s.get("run.preset") + "'");
  if (!s.is_auto("train.epochs")) c.epochs = static_cast<std::size_t>(s.get_int("train.epochs", 1, 1000000));
  if (!s.is_auto("train.batch")) c.batch = static_cast<std::size_t>(s.get_int("train.batch", 2, 1000000));
  if (!s.is_auto("train.lr")) c.lr = s.get_double("train.lr");
  c.seed = static_cast<std::uint64_t>(s.get_int("run.seed", 0, std::numeric_limits<long long>::max()));
  c.window = static_cast<std::size_t>(s.get_int("data.window", 1, 100000));
  c.objective = train::parse_objective(s.get("train.objective"));
  c.strategy = static_cast<int>(s.get_int("train.strategy", 1, 3));
  c.adv_weight = s.get_double("train.adv_weight");
  c.disc_lr = s.get_double("train.disc_lr");
  c.wae_literal = s.get_bool("train.wae_literal");
  c.kl_weight = s.get_double("train.kl_weight");
  c.select_best = s.get_bool("train.select_best");
  c.method = distill_method(s.get("distill.preset"));
  c.weights.lambda1 = s.get_double("loss.lambda1");
  c.weights.lambda2 = s.get_double("loss.lambda2");
  c.weights.kappa = s.get_double("loss.kappa");
  c.weights.contrastive = s.get_double("loss.contrastive");
  c.weights.alpha = s.get_double("loss.alpha");
  c.weights.tau = s.get_double("loss.tau");
  c.validate();
  return c;
}

/// Resolves run.holdout against the dataset: a subject id, or -1 for none.
inline int holdout_subject(const Settings& s, const gait::GaitDataset& ds) {
  const auto subjects = ds.subjects();
  if (subjects.empty()) throw ConfigError("dataset has no subjects");
  const auto v = canonical_name(s.get("run.holdout"));
  if (v == "none") return -1;
  if (v == "last") return subjects.back();
  const int id = static_cast<int>(s.get_int("run.holdout", 1, 1 << 20));
  if (std::find(subjects.begin(), subjects.end(), id) == subjects.end())
    throw ConfigError("run.holdout: subject " + std::to_string(id) + " is not in the dataset");
  return id;
}

/// Number of worker threads from TAKD_THREADS (default 1).
inline unsigned worker_threads(const char* env) {
  if (env == nullptr || *env == '\0') return 1;
  unsigned v = 0;
  const std::string s(env);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || v == 0 || v > 256)
    throw ConfigError("TAKD_THREADS must be an integer in [1, 256], got '" + s + "'");
  return v;
}

}  // namespace takd::cli
