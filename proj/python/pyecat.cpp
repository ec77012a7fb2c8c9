// Python bindings: configs, data generation, GST, AUC, experiments and
// metrics files.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "ecat/config.hpp"
#include "ecat/datagen.hpp"
#include "ecat/graph.hpp"
#include "ecat/harness.hpp"
#include "ecat/metrics.hpp"
#include "ecat/trainer.hpp"

namespace py = pybind11;
using namespace ecat;

namespace {

std::string as_config_text(const py::handle& v) {
  if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
  if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
    std::string out;
    for (const auto& item : v) {
      if (!out.empty()) out += ',';
      out += as_config_text(item);
    }
    return out;
  }
  return py::str(v).cast<std::string>();
}

RunConfig make_config(const std::optional<std::string>& path, const py::dict& overrides) {
  RunConfig config = path ? load_config(*path) : RunConfig{};
  std::vector<std::pair<std::string, std::string>> assignments;
  for (const auto& [k, v] : overrides) assignments.emplace_back(py::str(k).cast<std::string>(), as_config_text(v));
  apply_assignments(config, assignments);
  config.train.validate();
  return config;
}

py::dict config_dict(const RunConfig& config) {
  py::dict d;
  for (const auto& key : config_keys()) d[py::str(key.name)] = get_config_value(config, key.name);
  return d;
}

py::dict record_dict(const SampleRecord& r) {
  py::dict d;
  d["user"] = r.user_id;
  d["item"] = r.item_id;
  d["label"] = static_cast<int>(r.label);
  d["domain"] = to_string(r.domain);
  d["window"] = r.window;
  d["behavior_seq"] = r.behavior_seq;
  d["numeric"] = std::vector<double>(r.numeric.begin(), r.numeric.end());
  return d;
}

py::dict event_dict(const InteractionEvent& e) {
  py::dict d;
  d["user"] = e.user_id;
  d["item"] = e.item_id;
  d["kind"] = to_string(e.kind);
  d["domain"] = to_string(e.domain);
  d["window"] = e.window;
  return d;
}

template <class T, class F>
py::list list_of(const std::vector<T>& xs, F f) {
  py::list out;
  for (const auto& x : xs) out.append(f(x));
  return out;
}

NodeKey node_from(const py::handle& h) {
  auto t = h.cast<std::pair<std::string, std::uint32_t>>();
  if (t.first == "user") return NodeKey::user(t.second);
  if (t.first == "item") return NodeKey::item(t.second);
  throw ConfigError("node kind must be 'user' or 'item', got '" + t.first + "'");
}

py::list nodes_to_list(const NodeSet& s) {
  py::list out;
  for (const auto& n : s) out.append(py::make_tuple(n.kind == NodeKind::user ? "user" : "item", n.id));
  return out;
}

py::dict row_dict(const MetricsRow& r) {
  py::dict d;
  d["version"] = r.version;
  d["kind"] = r.kind;
  d["experiment"] = r.experiment;
  d["seed"] = r.seed;
  d["checkpoint"] = r.checkpoint;
  d["sample_mode"] = r.sample_mode;
  d["transfer_mode"] = r.transfer_mode;
  d["disable_gate"] = r.disable_gate;
  d["disable_intensity"] = r.disable_intensity;
  d["disable_fusion"] = r.disable_fusion;
  d["drift_angle"] = r.drift_angle;
  d["auc"] = r.auc;
  d["auc_stderr"] = r.auc_stderr;
  d["n_seeds"] = r.n_seeds;
  d["l_y"] = r.l_y;
  d["l_di"] = r.l_di;
  d["l_da"] = r.l_da;
  d["mean_gate"] = r.mean_gate;
  d["mean_w_da"] = r.mean_w_da;
  d["source_auc"] = r.source_auc;
  d["wall_seconds"] = r.wall_seconds;
  return d;
}

MetricsRow row_from(const py::dict& d) {
  MetricsRow r;
  auto get = [&](const char* k, auto& field) {
    if (d.contains(k)) field = d[k].cast<std::decay_t<decltype(field)>>();
  };
  get("version", r.version);
  get("kind", r.kind);
  get("experiment", r.experiment);
  get("seed", r.seed);
  get("checkpoint", r.checkpoint);
  get("sample_mode", r.sample_mode);
  get("transfer_mode", r.transfer_mode);
  get("disable_gate", r.disable_gate);
  get("disable_intensity", r.disable_intensity);
  get("disable_fusion", r.disable_fusion);
  get("drift_angle", r.drift_angle);
  get("auc", r.auc);
  get("auc_stderr", r.auc_stderr);
  get("n_seeds", r.n_seeds);
  get("l_y", r.l_y);
  get("l_di", r.l_di);
  get("l_da", r.l_da);
  get("mean_gate", r.mean_gate);
  get("mean_w_da", r.mean_w_da);
  get("source_auc", r.source_auc);
  get("wall_seconds", r.wall_seconds);
  return r;
}

}  // namespace

PYBIND11_MODULE(pyecat, m) {
  m.doc() = "Cross-domain continual transfer experiments.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", base.ptr());

  m.def(
      "config",
      [](std::optional<std::string> path, py::dict overrides) { return config_dict(make_config(path, overrides)); },
      py::arg("path") = py::none(), py::arg("overrides") = py::dict(),
      "Resolved configuration as {dotted key: text value}.");

  m.def(
      "generate_window",
      [](std::uint32_t window, std::optional<std::string> path, py::dict overrides) {
        const RunConfig config = make_config(path, overrides);
        WindowData data;
        {
          py::gil_scoped_release release;
          data = sample_window(generate_world(config.train.data, config.train.seed), window);
        }
        py::dict d;
        d["window"] = data.window;
        d["source_records"] = list_of(data.source_records, record_dict);
        d["target_records"] = list_of(data.target_records, record_dict);
        d["source_events"] = list_of(data.source_events, event_dict);
        d["target_events"] = list_of(data.target_events, event_dict);
        return d;
      },
      py::arg("window"), py::arg("path") = py::none(), py::arg("overrides") = py::dict(),
      "Records and events of one window of the synthetic world.");

  m.def(
      "auc", [](const std::vector<double>& s, const std::vector<double>& y) { return auc(s, y); }, py::arg("scores"),
      py::arg("labels"), "Rank AUC with midranks for ties.");

  m.def(
      "gst_expand",
      [](const std::vector<std::tuple<std::uint32_t, std::uint32_t, std::string>>& events, std::size_t num_users,
         std::size_t num_items, const py::list& seeds, bool one_hop_click, bool one_hop_pay, bool two_hop,
         std::size_t per_hop_fanout, std::size_t max_expanded_nodes) {
        std::vector<InteractionEvent> evs;
        for (const auto& [u, i, kind] : events) {
          if (kind != "click" && kind != "pay") throw ConfigError("event kind must be 'click' or 'pay'");
          evs.push_back({u, i, kind == "pay" ? EventKind::pay : EventKind::click, Domain::source, 0});
        }
        std::vector<NodeKey> seed_keys;
        for (const auto& s : seeds) seed_keys.push_back(node_from(s));
        GstConfig cfg;
        cfg.one_hop_click = one_hop_click;
        cfg.one_hop_pay = one_hop_pay;
        cfg.enable_two_hop_coclick = two_hop;
        cfg.per_hop_fanout = per_hop_fanout;
        cfg.max_expanded_nodes = max_expanded_nodes;
        cfg.validate();
        const auto g = build_graph(evs, num_users, num_items);
        const auto sel = gst_select(g, make_node_set(seed_keys), cfg, {});
        py::dict d;
        d["seeds"] = nodes_to_list(sel.seeds);
        d["one_hop"] = nodes_to_list(sel.one_hop);
        d["two_hop"] = nodes_to_list(sel.two_hop);
        d["selected"] = nodes_to_list(sel.selected);
        return d;
      },
      py::arg("events"), py::arg("num_users"), py::arg("num_items"), py::arg("seeds"), py::arg("one_hop_click") = true,
      py::arg("one_hop_pay") = true, py::arg("two_hop") = true, py::arg("per_hop_fanout") = 1'000'000,
      py::arg("max_expanded_nodes") = 1'000'000,
      "Graph expansion over (user, item, 'click'|'pay') events from ('user'|'item', id) seeds.");

  m.def(
      "run_experiment",
      [](std::optional<std::string> path, py::dict overrides) {
        const RunConfig config = make_config(path, overrides);
        std::vector<CheckpointResult> results;
        {
          py::gil_scoped_release release;
          results = run_experiment(config.train);
        }
        py::list out;
        for (const auto& r : results) {
          py::dict d;
          d["checkpoint"] = r.label;
          d["window"] = r.window;
          d["auc"] = r.auc;
          d["source_auc"] = r.source_auc;
          d["l_y"] = r.losses.l_y;
          d["l_di"] = r.losses.l_di;
          d["l_da"] = r.losses.l_da;
          d["mean_gate"] = r.losses.mean_gate;
          d["mean_w_da"] = r.losses.mean_w_da;
          d["steps"] = r.losses.steps;
          out.append(d);
        }
        return out;
      },
      py::arg("path") = py::none(), py::arg("overrides") = py::dict(), "One experiment; one dict per checkpoint.");

  m.def(
      "run_suite",
      [](const std::string& kind, std::optional<std::string> path, py::dict overrides) {
        const RunConfig config = make_config(path, overrides);
        const SuiteKind k = parse_suite_kind(kind);
        std::vector<MetricsRow> rows;
        {
          py::gil_scoped_release release;
          rows = run_suite(k, config);
        }
        return list_of(rows, row_dict);
      },
      py::arg("kind"), py::arg("path") = py::none(), py::arg("overrides") = py::dict(),
      "sample_transfer | adaptive_ablation | transfer_setting; run and aggregate rows.");

  m.def(
      "write_metrics",
      [](const py::list& rows, const std::string& dir, const std::string& stem) {
        std::vector<MetricsRow> rs;
        for (const auto& r : rows) rs.push_back(row_from(r.cast<py::dict>()));
        emit(rs, dir, stem);
      },
      py::arg("rows"), py::arg("dir"), py::arg("stem"), "Writes <stem>.csv and <stem>.json.");

  m.def(
      "read_metrics", [](const std::string& path) { return list_of(read_metrics_file(path), row_dict); },
      py::arg("path"), "Reads a .csv or .json metrics file.");

  m.def(
      "render_table",
      [](const py::list& rows) {
        std::vector<MetricsRow> rs;
        for (const auto& r : rows) rs.push_back(row_from(r.cast<py::dict>()));
        return render_table(rs);
      },
      py::arg("rows"));
}
