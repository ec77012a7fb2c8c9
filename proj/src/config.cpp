#include "ecat/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "ecat/tensor.hpp"

namespace ecat {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct Entry {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Access>
Entry real(std::string name, std::string doc, Access access) {
  return {{name, "real", std::move(doc)},
          [name, access](RunConfig& c, const std::string& v) { access(c) = parse_double(name, v); },
          [access](const RunConfig& c) { return format_double(access(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Entry count(std::string name, std::string doc, Access access) {
  return {{name, "integer", std::move(doc)},
          [name, access](RunConfig& c, const std::string& v) {
            access(c) = static_cast<std::remove_reference_t<decltype(access(c))>>(parse_u64(name, v));
          },
          [access](const RunConfig& c) { return std::to_string(access(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Entry flag(std::string name, std::string doc, Access access) {
  return {{name, "bool", std::move(doc)},
          [name, access](RunConfig& c, const std::string& v) { access(c) = parse_bool(name, v); },
          [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename Access>
Entry count_list(std::string name, std::string doc, Access access) {
  return {{name, "integer list", std::move(doc)},
          [name, access](RunConfig& c, const std::string& v) {
            auto& dst = access(c);
            dst.clear();
            for (const auto& item : split_list(v)) dst.push_back(parse_u64(name, item));
          },
          [access](const RunConfig& c) {
            std::string s;
            for (auto x : access(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ",") + std::to_string(x);
            return s;
          }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    // data
    t.push_back(count("data.num_users", "Users in the entire space", [](RunConfig& c) -> auto& { return c.train.data.num_users; }));
    t.push_back(count("data.num_items", "Items in the entire space", [](RunConfig& c) -> auto& { return c.train.data.num_items; }));
    t.push_back(count("data.latent_dim", "Dimension of the generating user/item latents", [](RunConfig& c) -> auto& { return c.train.data.latent_dim; }));
    t.push_back(count("data.seq_len", "Behaviour sequence length L", [](RunConfig& c) -> auto& { return c.train.data.seq_len; }));
    t.push_back(real("data.target_user_fraction", "Fraction of users in the target sub-channel", [](RunConfig& c) -> auto& { return c.train.data.target_user_fraction; }));
    t.push_back(real("data.target_item_fraction", "Fraction of items in the target sub-channel", [](RunConfig& c) -> auto& { return c.train.data.target_item_fraction; }));
    t.push_back(real("data.drift_angle", "Latent rotation per window, radians", [](RunConfig& c) -> auto& { return c.train.data.drift_angle; }));
    t.push_back(count("data.target_records_per_window", "Target records per window", [](RunConfig& c) -> auto& { return c.train.data.target_records_per_window; }));
    t.push_back(real("data.source_ratio", "Expected source records per target record", [](RunConfig& c) -> auto& { return c.train.data.source_ratio; }));
    t.push_back(real("data.target_bias", "Label logit bias of target records", [](RunConfig& c) -> auto& { return c.train.data.target_bias; }));
    t.push_back(real("data.source_bias", "Label logit bias of source records", [](RunConfig& c) -> auto& { return c.train.data.source_bias; }));
    t.push_back(real("data.latent_scale", "Standard deviation of latent coordinates", [](RunConfig& c) -> auto& { return c.train.data.latent_scale; }));
    t.push_back(real("data.popularity_exponent", "Zipf exponent of item popularity", [](RunConfig& c) -> auto& { return c.train.data.popularity_exponent; }));
    t.push_back(real("data.source_discount_share", "Share of source records from the target-like discount channel", [](RunConfig& c) -> auto& { return c.train.data.source_discount_share; }));
    t.push_back(real("data.source_conditional_shift", "Weight of the remixed interaction in the regular source channel", [](RunConfig& c) -> auto& { return c.train.data.source_conditional_shift; }));
    t.push_back(real("data.channel_signal", "Magnitude of the channel signal in numeric feature 0", [](RunConfig& c) -> auto& { return c.train.data.channel_signal; }));
    t.push_back(real("data.channel_noise", "Noise standard deviation of numeric feature 0", [](RunConfig& c) -> auto& { return c.train.data.channel_noise; }));
    t.push_back(count("data.click_candidates", "Popularity-drawn candidates per click", [](RunConfig& c) -> auto& { return c.train.data.click_candidates; }));
    // gst
    t.push_back(flag("gst.one_hop_click", "Expand one hop over click edges", [](RunConfig& c) -> auto& { return c.train.gst.one_hop_click; }));
    t.push_back(flag("gst.one_hop_pay", "Expand one hop over pay edges", [](RunConfig& c) -> auto& { return c.train.gst.one_hop_pay; }));
    t.push_back(flag("gst.enable_two_hop_coclick", "Expand two hops over co-click paths", [](RunConfig& c) -> auto& { return c.train.gst.enable_two_hop_coclick; }));
    t.push_back(count("gst.max_expanded_nodes", "Cap on expanded (non-seed) nodes", [](RunConfig& c) -> auto& { return c.train.gst.max_expanded_nodes; }));
    t.push_back(count("gst.per_hop_fanout", "Cap on expansion candidates per seed and hop", [](RunConfig& c) -> auto& { return c.train.gst.per_hop_fanout; }));
    t.push_back(flag("gst.require_both_endpoints", "Transfer a record only when both its user and item are selected (false: either)", [](RunConfig& c) -> auto& { return c.train.gst.require_both_endpoints; }));
    // model
    t.push_back(count("model.embed_dim", "Embedding and sequence representation width", [](RunConfig& c) -> auto& { return c.train.model.embed_dim; }));
    t.push_back(count("model.adapter_hidden", "Adapter hidden width", [](RunConfig& c) -> auto& { return c.train.model.adapter_hidden; }));
    t.push_back(count_list("model.mlp_hidden", "MLP tower widths, comma separated", [](RunConfig& c) -> auto& { return c.train.model.mlp_hidden; }));
    t.push_back(count("model.discriminator_hidden", "Discriminator hidden width", [](RunConfig& c) -> auto& { return c.train.model.discriminator_hidden; }));
    t.push_back(real("model.embedding_init_std", "Standard deviation of embedding initialisation", [](RunConfig& c) -> auto& { return c.train.model.embedding_init_std; }));
    t.push_back(real("model.gate_init_bias", "Initial gate bias", [](RunConfig& c) -> auto& { return c.train.model.gate_init_bias; }));
    // loss
    t.push_back(real("loss.alpha", "Weight of the distillation loss", [](RunConfig& c) -> auto& { return c.train.weights.alpha; }));
    t.push_back(real("loss.beta", "Weight of the discriminator loss", [](RunConfig& c) -> auto& { return c.train.weights.beta; }));
    // train
    t.push_back(real("train.learning_rate", "Adagrad learning rate", [](RunConfig& c) -> auto& { return c.train.learning_rate; }));
    t.push_back(real("train.accumulator_decay", "Adagrad accumulator decay per step", [](RunConfig& c) -> auto& { return c.train.accumulator_decay; }));
    t.push_back(real("train.adagrad_epsilon", "Adagrad denominator epsilon", [](RunConfig& c) -> auto& { return c.train.adagrad_epsilon; }));
    t.push_back(real("train.initial_accumulator", "Adagrad initial accumulator value", [](RunConfig& c) -> auto& { return c.train.initial_accumulator; }));
    t.push_back(count("train.batch_size", "Records per step", [](RunConfig& c) -> auto& { return c.train.batch_size; }));
    t.push_back(count("train.window_count", "Target training windows", [](RunConfig& c) -> auto& { return c.train.window_count; }));
    t.push_back(count("train.delta_t_windows", "Windows between source refreshes and checkpoints", [](RunConfig& c) -> auto& { return c.train.delta_t_windows; }));
    t.push_back({{"train.transfer_mode", "one_time|continual", "Source refresh schedule"},
                 [](RunConfig& c, const std::string& v) { c.train.transfer_mode = parse_transfer_mode(v); },
                 [](const RunConfig& c) { return std::string(to_string(c.train.transfer_mode)); }});
    t.push_back({{"train.sample_mode", "only_target|merge_all|gst_only|gst_and_da", "Source samples admitted to T's stream"},
                 [](RunConfig& c, const std::string& v) { c.train.sample_mode = parse_sample_mode(v); },
                 [](const RunConfig& c) { return std::string(to_string(c.train.sample_mode)); }});
    t.push_back(flag("train.disable_gate", "Replace the gate with a fixed 0.5 mix", [](RunConfig& c) -> auto& { return c.train.disable_gate; }));
    t.push_back(flag("train.disable_intensity", "Use unit distillation intensity", [](RunConfig& c) -> auto& { return c.train.disable_intensity; }));
    t.push_back(flag("train.disable_fusion", "Train T without adapter or gate", [](RunConfig& c) -> auto& { return c.train.disable_fusion; }));
    t.push_back(count("train.source_pretrain_epochs", "Epochs of S on window 0 before warm-up", [](RunConfig& c) -> auto& { return c.train.source_pretrain_epochs; }));
    t.push_back(count("train.source_refresh_epochs", "Epochs of S at each refresh", [](RunConfig& c) -> auto& { return c.train.source_refresh_epochs; }));
    t.push_back(count("train.target_epochs", "Epochs of T per window", [](RunConfig& c) -> auto& { return c.train.target_epochs; }));
    t.push_back(count("train.seed", "Seed of a single run (overridden per seed in suites)", [](RunConfig& c) -> auto& { return c.train.seed; }));
    t.push_back({{"train.checkpoint_dir", "path", "Directory for T checkpoints; empty disables"},
                 [](RunConfig& c, const std::string& v) { c.train.checkpoint_dir = v; },
                 [](const RunConfig& c) { return c.train.checkpoint_dir; }});
    // suite
    t.push_back(count_list("suite.seeds", "Seeds averaged in suites", [](RunConfig& c) -> auto& { return c.suite.seeds; }));
    t.push_back(flag("suite.record_timing", "Write measured wall-clock seconds", [](RunConfig& c) -> auto& { return c.suite.record_timing; }));
    return t;
  }();
  return table;
}

const Entry& find_entry(const std::string& key) {
  for (const auto& e : entries()) {
    if (e.key.name == key) return e;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  find_entry(key).set(config, trim(value));
}

std::string get_config_value(const RunConfig& config, const std::string& key) { return find_entry(key).get(config); }

std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string section;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

void apply_assignments(RunConfig& config, const std::vector<std::pair<std::string, std::string>>& assignments) {
  for (const auto& [k, v] : assignments) set_config_value(config, k, v);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  RunConfig config;
  apply_assignments(config, parse_config_text(in, path));
  return config;
}

void write_config(std::ostream& out, const RunConfig& config) {
  std::string section;
  for (const auto& e : entries()) {
    const auto dot = e.key.name.find('.');
    const std::string s = e.key.name.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    out << e.key.name.substr(dot + 1) << " = " << e.get(config) << '\n';
  }
}

std::string config_reference() {
  const RunConfig defaults;
  std::ostringstream out;
  out << "| key | type | default | description |\n|---|---|---|---|\n";
  for (const auto& e : entries()) {
    std::string type;
    for (char ch : e.key.type) type += ch == '|' ? std::string("\\|") : std::string(1, ch);
    out << "| `" << e.key.name << "` | " << type << " | `" << e.get(defaults) << "` | " << e.key.description
        << " |\n";
  }
  return out.str();
}

}  // namespace ecat
