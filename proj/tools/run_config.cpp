#include "run_config.hpp"

#include <fstream>
#include <set>
#include <string>

#include "mfeit/error.hpp"

namespace mfeit::cli {

using nlohmann::json;

namespace {

/// Reads keys from one JSON object and rejects any key that was never asked for.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError("'" + where_ + "' must be a JSON object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + path(key) + "': " + e.what());
    }
  }

  const json* object(const std::string& key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!known_.count(item.key())) throw ConfigError("unknown config key '" + path(item.key()) + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> known_;
};

std::string normalization_name(data::Normalization n) {
  return n == data::Normalization::time_difference ? "td" : "fd";
}

data::Normalization parse_normalization(const std::string& s) {
  if (s == "td") return data::Normalization::time_difference;
  if (s == "fd") return data::Normalization::frequency_difference;
  throw ConfigError("dataset.normalization must be 'td' or 'fd', got '" + s + "'");
}

void read_dataset(const json& j, data::DatasetConfig& d) {
  Section s(j, "dataset");
  std::string preset = "desk";
  s.get("preset", preset);
  if (preset == "paper") {
    d = data::DatasetConfig::paper_scale();
  } else if (preset != "desk") {
    throw ConfigError("dataset.preset must be 'desk' or 'paper', got '" + preset + "'");
  }
  s.get("height", d.height);
  s.get("width", d.width);
  s.get("jacobian_level", d.jacobian_level);
  s.get("forward_level", d.forward_level);
  s.get("n_train", d.n_train);
  s.get("n_val", d.n_val);
  s.get("n_test", d.n_test);
  s.get("n_electrodes", d.sensor.n_electrodes);
  s.get("electrode_coverage", d.sensor.electrode_coverage);
  s.get("radius", d.sensor.radius);
  std::string norm = normalization_name(d.normalization);
  s.get("normalization", norm);
  d.normalization = parse_normalization(norm);
  s.get("fd_reference", d.fd_reference);
  s.get("background_sigma", d.groups.background);
  if (const json* pj = s.object("phantom")) {
    Section p(*pj, "dataset.phantom");
    std::vector<double> weights(d.phantom.count_weights.begin(), d.phantom.count_weights.end());
    p.get("count_weights", weights);
    if (weights.size() != 3) throw ConfigError("dataset.phantom.count_weights needs 3 entries");
    std::copy(weights.begin(), weights.end(), d.phantom.count_weights.begin());
    p.get("forced_count", d.phantom.forced_count);
    p.get("min_diameter", d.phantom.min_diameter);
    p.get("max_diameter", d.phantom.max_diameter);
    p.get("max_attempts", d.phantom.max_attempts);
    p.finish();
  }
  s.finish();
  d.validate();
}

void read_admm(const json& j, admm::AdmmParams& a) {
  Section s(j, "admm");
  s.get("beta1", a.beta1);
  s.get("beta2", a.beta2);
  s.get("gamma1", a.gamma1);
  s.get("gamma2", a.gamma2);
  s.get("eta", a.eta);
  s.get("iterations", a.iterations);
  s.get("gn_lambda", a.gn_lambda);
  std::string x = a.x_update == admm::XUpdate::gradient ? "gradient" : "closed_form";
  s.get("x_update", x);
  if (x == "gradient") {
    a.x_update = admm::XUpdate::gradient;
  } else if (x == "closed_form") {
    a.x_update = admm::XUpdate::closed_form;
  } else {
    throw ConfigError("admm.x_update must be 'gradient' or 'closed_form'");
  }
  std::string init = a.init == admm::Init::gauss_newton ? "gn" : "zeros";
  s.get("init", init);
  if (init == "gn") {
    a.init = admm::Init::gauss_newton;
  } else if (init == "zeros") {
    a.init = admm::Init::zeros;
  } else {
    throw ConfigError("admm.init must be 'gn' or 'zeros'");
  }
  s.finish();
  if (a.eta < 0.0) throw ConfigError("admm.eta must be positive (0 selects the default)");
  if (a.gn_lambda < 0.0) throw ConfigError("admm.gn_lambda must be positive (0 selects the default)");
}

void read_net(const json& j, net::NetConfig& n) {
  Section s(j, "net");
  s.get("channels", n.channels);
  s.get("hidden", n.hidden);
  s.get("blocks", n.blocks);
  std::string arch = net::arch_name(n.arch);
  s.get("arch", arch);
  n.arch = net::parse_arch(arch);
  s.get("attention_scaling", n.attention_scaling);
  s.get("sign_convention", n.sign_convention);
  s.get("gn_lambda", n.gn_lambda);
  s.get("seed", n.seed);
  s.finish();
}

void read_train(const json& j, net::TrainConfig& t) {
  Section s(j, "train");
  s.get("batch", t.batch);
  s.get("lr", t.lr);
  s.get("epochs_a", t.epochs_a);
  s.get("epochs_b", t.epochs_b);
  s.get("epochs_c", t.epochs_c);
  s.get("seed", t.seed);
  s.get("keep_best", t.keep_best);
  s.finish();
  t.validate();
}

void read_eval(const json& j, EvalSettings& e) {
  Section s(j, "eval");
  s.get("snrs", e.snrs);
  s.get("noise_seed", e.noise_seed);
  s.get("iter_sweep", e.iter_sweep);
  s.finish();
  for (int k : e.iter_sweep) {
    if (k < 1) throw ConfigError("eval.iter_sweep entries must be >= 1");
  }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Section s(j, "");
  s.get("seed", c.seed);
  if (const json* d = s.object("dataset")) read_dataset(*d, c.dataset);
  if (const json* a = s.object("admm")) read_admm(*a, c.admm);
  if (const json* n = s.object("net")) read_net(*n, c.net);
  if (const json* t = s.object("train")) read_train(*t, c.train);
  if (const json* e = s.object("eval")) read_eval(*e, c.eval);
  s.finish();
  c.train.blocks = c.net.blocks;
  c.net.validate(c.dataset.height, c.dataset.width);
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  const auto& d = dataset;
  return json{
      {"seed", seed},
      {"dataset",
       {{"height", d.height},
        {"width", d.width},
        {"jacobian_level", d.jacobian_level},
        {"forward_level", d.forward_level},
        {"n_train", d.n_train},
        {"n_val", d.n_val},
        {"n_test", d.n_test},
        {"n_electrodes", d.sensor.n_electrodes},
        {"electrode_coverage", d.sensor.electrode_coverage},
        {"radius", d.sensor.radius},
        {"normalization", normalization_name(d.normalization)},
        {"fd_reference", d.fd_reference},
        {"background_sigma", d.groups.background},
        {"phantom",
         {{"count_weights", d.phantom.count_weights},
          {"forced_count", d.phantom.forced_count},
          {"min_diameter", d.phantom.min_diameter},
          {"max_diameter", d.phantom.max_diameter},
          {"max_attempts", d.phantom.max_attempts}}}}},
      {"admm",
       {{"beta1", admm.beta1},
        {"beta2", admm.beta2},
        {"gamma1", admm.gamma1},
        {"gamma2", admm.gamma2},
        {"eta", admm.eta},
        {"iterations", admm.iterations},
        {"gn_lambda", admm.gn_lambda},
        {"x_update", admm.x_update == admm::XUpdate::gradient ? "gradient" : "closed_form"},
        {"init", admm.init == admm::Init::gauss_newton ? "gn" : "zeros"}}},
      {"net",
       {{"channels", net.channels},
        {"hidden", net.hidden},
        {"blocks", net.blocks},
        {"arch", net::arch_name(net.arch)},
        {"attention_scaling", net.attention_scaling},
        {"sign_convention", net.sign_convention},
        {"gn_lambda", net.gn_lambda},
        {"seed", net.seed}}},
      {"train",
       {{"batch", train.batch},
        {"lr", train.lr},
        {"epochs_a", train.epochs_a},
        {"epochs_b", train.epochs_b},
        {"epochs_c", train.epochs_c},
        {"seed", train.seed},
        {"keep_best", train.keep_best}}},
      {"eval", {{"snrs", eval.snrs}, {"noise_seed", eval.noise_seed}, {"iter_sweep", eval.iter_sweep}}},
  };
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write resolved config '" + path.string() + "'");
  out << to_json().dump(2) << '\n';
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace mfeit::cli
