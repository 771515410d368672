#include "rgcl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace rgcl {

namespace {

using nlohmann::json;

// Bumped whenever a change alters training numerics or report layout.
constexpr std::string_view kCodeVersion = "rgcl-1.0.0";

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
  throw std::invalid_argument("config key '" + key + "': " + why);
}

std::size_t as_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
    bad_key(key, "expected a non-negative integer");
  return v.get<std::size_t>();
}

double as_real(const json& v, const std::string& key) {
  if (!v.is_number()) bad_key(key, "expected a number");
  return v.get<double>();
}

bool as_flag(const json& v, const std::string& key) {
  if (!v.is_boolean()) bad_key(key, "expected true or false");
  return v.get<bool>();
}

std::string as_text(const json& v, const std::string& key) {
  if (!v.is_string()) bad_key(key, "expected a string");
  return v.get<std::string>();
}

TrainMode parse_mode(const std::string& s) {
  if (s == "isogclr") return TrainMode::isogclr;
  if (s == "sogclr-baseline") return TrainMode::sogclr_baseline;
  if (s == "bimodal") return TrainMode::bimodal;
  bad_key("mode", "unknown mode '" + s + "' (isogclr | sogclr-baseline | bimodal)");
}

OptimizerMode parse_optimizer(const std::string& s) {
  if (s == "momentum") return OptimizerMode::momentum;
  if (s == "adam") return OptimizerMode::adam;
  bad_key("optimizer", "unknown optimizer '" + s + "' (momentum | adam)");
}

std::string optimizer_name(OptimizerMode m) { return m == OptimizerMode::adam ? "adam" : "momentum"; }

Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  bad_key("activation", "unknown activation '" + s + "' (identity | tanh)");
}

using Setter = std::function<void(ExperimentConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"mode", [](ExperimentConfig& c, const json& v, const std::string& k) { c.mode = parse_mode(as_text(v, k)); }},
      {"optimizer", [](ExperimentConfig& c, const json& v, const std::string& k) { c.optimizer = parse_optimizer(as_text(v, k)); }},
      {"rho", [](ExperimentConfig& c, const json& v, const std::string& k) { c.loss.rho = as_real(v, k); }},
      {"tau0", [](ExperimentConfig& c, const json& v, const std::string& k) { c.loss.tau0 = as_real(v, k); }},
      {"tau_init", [](ExperimentConfig& c, const json& v, const std::string& k) { c.loss.tau_init = as_real(v, k); }},
      {"beta0", [](ExperimentConfig& c, const json& v, const std::string& k) { c.loss.beta0 = as_real(v, k); }},
      {"beta1", [](ExperimentConfig& c, const json& v, const std::string& k) { c.loss.beta1 = as_real(v, k); }},
      {"eta_w", [](ExperimentConfig& c, const json& v, const std::string& k) { c.loss.eta_w = as_real(v, k); }},
      {"eta_tau", [](ExperimentConfig& c, const json& v, const std::string& k) { c.loss.eta_tau = as_real(v, k); }},
      {"tau_grad_scale", [](ExperimentConfig& c, const json& v, const std::string& k) {
         if (v.is_null())
           c.loss.tau_grad_scale.reset();
         else
           c.loss.tau_grad_scale = as_real(v, k);
       }},
      {"log_epsilon", [](ExperimentConfig& c, const json& v, const std::string& k) { c.loss.log_epsilon = as_real(v, k); }},
      {"symmetrize", [](ExperimentConfig& c, const json& v, const std::string& k) { c.loss.symmetrize = as_flag(v, k); }},
      {"clusters", [](ExperimentConfig& c, const json& v, const std::string& k) { c.clusters = as_count(v, k); }},
      {"samples", [](ExperimentConfig& c, const json& v, const std::string& k) { c.samples = as_count(v, k); }},
      {"imbalance_ratio", [](ExperimentConfig& c, const json& v, const std::string& k) { c.imbalance_ratio = as_real(v, k); }},
      {"input_dim", [](ExperimentConfig& c, const json& v, const std::string& k) { c.input_dim = as_count(v, k); }},
      {"noise", [](ExperimentConfig& c, const json& v, const std::string& k) { c.noise = as_real(v, k); }},
      {"augment_strength", [](ExperimentConfig& c, const json& v, const std::string& k) { c.augment_strength = as_real(v, k); }},
      {"latent_dim", [](ExperimentConfig& c, const json& v, const std::string& k) { c.latent_dim = as_count(v, k); }},
      {"image_dim", [](ExperimentConfig& c, const json& v, const std::string& k) { c.image_dim = as_count(v, k); }},
      {"text_dim", [](ExperimentConfig& c, const json& v, const std::string& k) { c.text_dim = as_count(v, k); }},
      {"mirrored", [](ExperimentConfig& c, const json& v, const std::string& k) { c.mirrored = as_flag(v, k); }},
      {"hidden_dim", [](ExperimentConfig& c, const json& v, const std::string& k) { c.hidden_dim = as_count(v, k); }},
      {"embed_dim", [](ExperimentConfig& c, const json& v, const std::string& k) { c.embed_dim = as_count(v, k); }},
      {"activation", [](ExperimentConfig& c, const json& v, const std::string& k) { c.activation = parse_activation(as_text(v, k)); }},
      {"batch_size", [](ExperimentConfig& c, const json& v, const std::string& k) { c.batch_size = as_count(v, k); }},
      {"epochs", [](ExperimentConfig& c, const json& v, const std::string& k) { c.epochs = as_count(v, k); }},
      {"seed", [](ExperimentConfig& c, const json& v, const std::string& k) { c.seed = as_count(v, k); }},
      {"out_dir", [](ExperimentConfig& c, const json& v, const std::string& k) { c.out_dir = as_text(v, k); }},
      {"knn_k", [](ExperimentConfig& c, const json& v, const std::string& k) { c.knn_k = as_count(v, k); }},
      {"held_out_fraction", [](ExperimentConfig& c, const json& v, const std::string& k) { c.held_out_fraction = as_real(v, k); }},
      {"eval_every", [](ExperimentConfig& c, const json& v, const std::string& k) { c.eval_every = as_count(v, k); }},
  };
  return table;
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
}

ViewPairs eval_views(const Matrix& inputs, double strength, const RandomStream& root) {
  const RandomStream base = root.split("eval_views");
  const std::size_t n = inputs.rows();
  ViewPairs v{Matrix(n, inputs.cols()), Matrix(n, inputs.cols())};
  for (std::size_t i = 0; i < n; ++i) {
    RandomStream rs = base.split(i);
    const Vector a = synth::augment(inputs.row(i), strength, rs);
    const Vector p = synth::augment(inputs.row(i), strength, rs);
    std::copy(a.begin(), a.end(), v.anchor_views.row(i).begin());
    std::copy(p.begin(), p.end(), v.positive_views.row(i).begin());
  }
  return v;
}

// ||(z - proj(z - eta grad)) / eta||^2 with w unconstrained, so the w block is ||grad_w||^2.
// The tau block uses the scaled gradient the optimizer actually steps along.
double gradient_mapping_sq(const FullGradient& fg, std::span<const double> tau, const RgclConfig& cfg,
                           std::size_t n, bool tau_trained) {
  double acc = squared_norm(fg.grad_w);
  if (!tau_trained || cfg.eta_tau <= 0.0) return acc;
  const double scale = cfg.tau_scale(n);
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double moved = project_tau(tau[i] - cfg.eta_tau * scale * fg.grad_tau[i], cfg);
    const double d = (tau[i] - moved) / cfg.eta_tau;
    acc += d * d;
  }
  return acc;
}

double objective_estimate(std::span<const AnchorState> anchors, const RgclConfig& cfg) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const AnchorState& a : anchors) {
    if (!a.initialized) continue;
    acc += a.tau * std::log(a.s) + (a.tau - cfg.tau0) * cfg.rho;
    ++count;
  }
  return count ? acc / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

Vector taus_of(std::span<const AnchorState> anchors) {
  Vector t(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) t[i] = anchors[i].tau;
  return t;
}

double stddev_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

struct MetricsRow {
  std::size_t epoch = 0;
  double objective_estimate = std::numeric_limits<double>::quiet_NaN();
  double tau_mean = 0.0;
  double tau_std = 0.0;
  std::optional<Checkpoint> checkpoint;
};

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "epoch,objective_estimate,tau_mean,tau_std,exact_objective,grad_mapping_sq\n";
  for (const MetricsRow& r : rows) {
    os << r.epoch << ',' << (std::isnan(r.objective_estimate) ? "" : format_g17(r.objective_estimate)) << ','
       << format_g17(r.tau_mean) << ',' << format_g17(r.tau_std) << ',';
    if (r.checkpoint) os << format_g17(r.checkpoint->exact_objective) << ',' << format_g17(r.checkpoint->grad_mapping_sq);
    else os << ',';
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

bool checkpoint_due(std::size_t epoch, const ExperimentConfig& cfg) {
  return epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
}

std::size_t steps_per_epoch(const ExperimentConfig& cfg) {
  return std::max<std::size_t>(1, cfg.samples / cfg.batch_size);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::isogclr: return "isogclr";
    case TrainMode::sogclr_baseline: return "sogclr-baseline";
    case TrainMode::bimodal: return "bimodal";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  loss.validate();
  if (clusters < 2) throw std::invalid_argument("clusters must be >= 2");
  if (samples < clusters) throw std::invalid_argument("samples must be >= clusters");
  if (!(imbalance_ratio >= 1.0)) throw std::invalid_argument("imbalance_ratio must be >= 1");
  if (input_dim < 1 || hidden_dim < 1 || embed_dim < 2) throw std::invalid_argument("encoder dimensions too small");
  if (!(noise >= 0.0)) throw std::invalid_argument("noise must be >= 0");
  if (!(augment_strength >= 0.0)) throw std::invalid_argument("augment_strength must be >= 0");
  if (mode == TrainMode::bimodal) {
    if (latent_dim < 2 || image_dim < 2 || text_dim < 2) throw std::invalid_argument("bimodal dimensions must be >= 2");
    if (mirrored && image_dim != text_dim) throw std::invalid_argument("mirrored needs image_dim == text_dim");
  }
  if (batch_size < 2 || batch_size > samples)
    throw std::invalid_argument("batch_size must be in [2, samples]");
  if (knn_k < 1 || knn_k % 2 == 0) throw std::invalid_argument("knn_k must be odd and >= 1");
  if (!(held_out_fraction > 0.0 && held_out_fraction < 1.0))
    throw std::invalid_argument("held_out_fraction must be in (0, 1)");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
}

json ExperimentConfig::to_json() const {
  json j;
  j["mode"] = to_string(mode);
  j["optimizer"] = optimizer_name(optimizer);
  j["rho"] = loss.rho;
  j["tau0"] = loss.tau0;
  j["tau_init"] = loss.tau_init;
  j["beta0"] = loss.beta0;
  j["beta1"] = loss.beta1;
  j["eta_w"] = loss.eta_w;
  j["eta_tau"] = loss.eta_tau;
  j["tau_grad_scale"] = loss.tau_grad_scale ? json(*loss.tau_grad_scale) : json(nullptr);
  j["log_epsilon"] = loss.log_epsilon;
  j["symmetrize"] = loss.symmetrize;
  j["clusters"] = clusters;
  j["samples"] = samples;
  j["imbalance_ratio"] = imbalance_ratio;
  j["input_dim"] = input_dim;
  j["noise"] = noise;
  j["augment_strength"] = augment_strength;
  j["latent_dim"] = latent_dim;
  j["image_dim"] = image_dim;
  j["text_dim"] = text_dim;
  j["mirrored"] = mirrored;
  j["hidden_dim"] = hidden_dim;
  j["embed_dim"] = embed_dim;
  j["activation"] = activation == Activation::tanh ? "tanh" : "identity";
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["knn_k"] = knn_k;
  j["held_out_fraction"] = held_out_fraction;
  j["eval_every"] = eval_every;
  // out_dir is where results go, not what they are; it stays out of the echo and the hash.
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  ExperimentConfig cfg;
  const auto& table = setters();
  for (const auto& [key, value] : j.items()) {
    const auto it = table.find(key);
    if (it == table.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->second(cfg, value, key);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void ExperimentConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw std::invalid_argument("unknown config key '" + key + "'");
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  it->second(*this, value, key);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = std::string(kCodeVersion) + "\n" + cfg.to_json().dump();
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

double knn_accuracy(const Matrix& embeddings, std::span<const std::size_t> labels, std::size_t k,
                    double held_out_fraction, RandomStream& stream) {
  const std::size_t n = embeddings.rows();
  if (labels.size() != n) throw std::invalid_argument("knn_accuracy: label count mismatch");
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("knn_accuracy: k must be odd and >= 1");
  if (!(held_out_fraction > 0.0 && held_out_fraction < 1.0))
    throw std::invalid_argument("knn_accuracy: held_out_fraction must be in (0, 1)");
  const auto n_query = static_cast<std::size_t>(std::llround(held_out_fraction * static_cast<double>(n)));
  if (n_query == 0) throw std::invalid_argument("knn_accuracy: empty query set");
  if (n - n_query < k) throw std::invalid_argument("knn_accuracy: fewer than k training points");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i + 1 < n; ++i)
    std::swap(perm[i], perm[i + static_cast<std::size_t>(stream.uniform_below(n - i))]);
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_query), perm.end());
  std::sort(train.begin(), train.end());

  Vector inv_norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double nr = std::sqrt(squared_norm(embeddings.row(i)));
    inv_norm[i] = nr > 0.0 ? 1.0 / nr : 0.0;
  }
  const std::size_t n_classes = *std::max_element(labels.begin(), labels.end()) + 1;

  std::vector<char> correct(n_query, 0);
  parallel_for(n_query, [&](std::size_t q) {
    const std::size_t qi = perm[q];
    std::vector<std::pair<double, std::size_t>> sims(train.size());
    for (std::size_t t = 0; t < train.size(); ++t) {
      const std::size_t ti = train[t];
      sims[t] = {dot(embeddings.row(qi), embeddings.row(ti)) * inv_norm[qi] * inv_norm[ti], ti};
    }
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k), sims.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<std::size_t> votes(n_classes, 0);
    for (std::size_t r = 0; r < k; ++r) ++votes[labels[sims[r].second]];
    // max_element returns the first maximum, i.e. the lowest class id
    const auto winner = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    correct[q] = winner == labels[qi] ? 1 : 0;
  });
  return static_cast<double>(std::count(correct.begin(), correct.end(), 1)) / static_cast<double>(n_query);
}

void export_tau_csv(std::span<const AnchorState> anchors, std::span<const std::size_t> labels,
                    const std::filesystem::path& path) {
  if (anchors.size() != labels.size()) throw std::invalid_argument("export_tau_csv: label count mismatch");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "index,label,tau,s\n";
  for (std::size_t i = 0; i < anchors.size(); ++i)
    os << i << ',' << labels[i] << ',' << format_g17(anchors[i].tau) << ',' << format_g17(anchors[i].s) << '\n';
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::vector<TauRow> read_tau_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "index,label,tau,s")
    throw std::runtime_error(path.string() + ": unexpected header");
  std::vector<TauRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string a, b, c, d;
    if (!std::getline(fields, a, ',') || !std::getline(fields, b, ',') || !std::getline(fields, c, ',') ||
        !std::getline(fields, d))
      throw std::runtime_error(path.string() + ": malformed row " + std::to_string(rows.size()));
    rows.push_back({std::stoul(a), std::stoul(b), std::stod(c), std::stod(d)});
  }
  return rows;
}

json TemperatureSummary::to_json() const {
  return {{"mean", mean},
          {"stddev", stddev},
          {"min", min},
          {"max", max},
          {"cluster_mean", cluster_mean},
          {"spearman_size_tau", spearman_size_tau},
          {"head3_mean", head3_mean},
          {"tail3_mean", tail3_mean}};
}

TemperatureSummary summarize_temperatures(std::span<const double> tau, std::span<const std::size_t> labels,
                                          std::span<const std::size_t> cluster_sizes) {
  if (tau.size() != labels.size()) throw std::invalid_argument("summarize_temperatures: label count mismatch");
  if (tau.empty()) throw std::invalid_argument("summarize_temperatures: no temperatures");
  TemperatureSummary s;
  s.mean = mean_of(tau);
  s.stddev = stddev_of(tau);
  s.min = *std::min_element(tau.begin(), tau.end());
  s.max = *std::max_element(tau.begin(), tau.end());

  const std::size_t k = cluster_sizes.size();
  s.cluster_mean.assign(k, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < tau.size(); ++i) {
    if (labels[i] >= k) throw std::invalid_argument("summarize_temperatures: label out of range");
    s.cluster_mean[labels[i]] += tau[i];
    ++counts[labels[i]];
  }
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c]) s.cluster_mean[c] /= static_cast<double>(counts[c]);

  if (k >= 3) {
    Vector sizes(cluster_sizes.begin(), cluster_sizes.end());
    s.spearman_size_tau = spearman_rank_corr(sizes, s.cluster_mean);
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cluster_sizes[a] > cluster_sizes[b]; });
    for (std::size_t r = 0; r < 3; ++r) {
      s.head3_mean += s.cluster_mean[order[r]] / 3.0;
      s.tail3_mean += s.cluster_mean[order[k - 1 - r]] / 3.0;
    }
  }
  return s;
}

json Report::to_json() const {
  json j;
  j["config"] = config.to_json();
  j["config_hash"] = hash;
  j["steps"] = steps;

  std::vector<std::size_t> epochs(objective_estimate.size());
  std::iota(epochs.begin(), epochs.end(), std::size_t{1});
  json est = json::array();
  for (double v : objective_estimate) est.push_back(number_or_null(v));
  j["series"] = {{"epoch", epochs}, {"objective_estimate", est}};

  json ck_epoch = json::array(), ck_obj = json::array(), ck_gm = json::array();
  for (const Checkpoint& c : checkpoints) {
    ck_epoch.push_back(c.epoch);
    ck_obj.push_back(number_or_null(c.exact_objective));
    ck_gm.push_back(number_or_null(c.grad_mapping_sq));
  }
  j["checkpoints"] = {{"epoch", ck_epoch}, {"exact_objective", ck_obj}, {"grad_mapping_sq", ck_gm}};
  j["stationarity_ratio"] = number_or_null(stationarity_ratio(checkpoints));

  json t = tau_summary.to_json();
  t["values"] = tau;
  if (tau_text_summary) {
    j["tau_image"] = t;
    json tt = tau_text_summary->to_json();
    tt["values"] = tau_text;
    j["tau_text"] = tt;
  } else {
    j["tau"] = t;
  }
  j["knn_accuracy"] = knn_accuracy;
  j["g_floor"] = config.loss.g_floor();
  j["min_g_seen"] = number_or_null(min_g_seen);
  j["min_s_seen"] = number_or_null(min_s_seen);
  j["wall_clock"] = {{"seconds", wall_clock_seconds}};
  return j;
}

double stationarity_ratio(std::span<const Checkpoint> checkpoints) {
  if (checkpoints.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t w = std::max<std::size_t>(1, checkpoints.size() / 10);
  double first = 0.0, last = 0.0;
  for (std::size_t r = 0; r < w; ++r) {
    first += checkpoints[r].grad_mapping_sq;
    last += checkpoints[checkpoints.size() - 1 - r].grad_mapping_sq;
  }
  return first > 0.0 ? last / first : std::numeric_limits<double>::quiet_NaN();
}

void write_json(const json& doc, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << doc.dump(2) << '\n';
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

synth::SynthDataset make_unimodal_dataset(const ExperimentConfig& cfg) {
  return synth::gen_longtail_clusters(
      {cfg.clusters, cfg.samples, cfg.imbalance_ratio, cfg.input_dim, cfg.noise, cfg.seed});
}

synth::BimodalSynthDataset make_bimodal_dataset(const ExperimentConfig& cfg) {
  synth::BimodalParams p;
  p.clusters = cfg.clusters;
  p.samples = cfg.samples;
  p.imbalance_ratio = cfg.imbalance_ratio;
  p.latent_dim = cfg.latent_dim;
  p.image_dim = cfg.image_dim;
  p.text_dim = cfg.text_dim;
  p.noise = cfg.noise;
  p.seed = cfg.seed;
  p.mirrored = cfg.mirrored;
  return synth::gen_bimodal_pairs(p);
}

Report run_train_unimodal(const ExperimentConfig& cfg, bool write_files) {
  cfg.validate();
  if (cfg.mode == TrainMode::bimodal) throw std::invalid_argument("run_train_unimodal: config mode is bimodal");
  const auto t0 = std::chrono::steady_clock::now();
  const bool baseline = cfg.mode == TrainMode::sogclr_baseline;

  const synth::SynthDataset ds = make_unimodal_dataset(cfg);
  const std::size_t n = ds.size();
  const RandomStream root(cfg.seed);
  EncoderParams params = init_encoder(cfg.input_dim, cfg.hidden_dim, cfg.embed_dim, cfg.activation, root.split("model"));
  OptimizerState opt = OptimizerState::create(n, params.param_count(), cfg.loss,
                                              baseline ? OptimizerMode::fixed_tau : cfg.optimizer);
  const ViewPairs eval = eval_views(ds.inputs, cfg.augment_strength, root);
  const RandomStream train = root.split("train");
  const UnimodalTask task{ds.inputs, cfg.augment_strength};

  Report rep;
  rep.config = cfg;
  rep.hash = config_hash(cfg);
  rep.min_g_seen = std::numeric_limits<double>::infinity();
  rep.min_s_seen = std::numeric_limits<double>::infinity();
  std::vector<MetricsRow> metrics;

  auto checkpoint = [&](std::size_t epoch) {
    const Vector tau = taus_of(opt.anchors);
    const FullGradient fg = full_gradient_unimodal(params, eval, tau, cfg.loss);
    return Checkpoint{epoch, fg.value, gradient_mapping_sq(fg, tau, cfg.loss, n, !baseline)};
  };
  auto record = [&](std::size_t epoch, double estimate) {
    const Vector tau = taus_of(opt.anchors);
    MetricsRow row{epoch, estimate, mean_of(tau), stddev_of(tau), std::nullopt};
    if (checkpoint_due(epoch, cfg)) {
      row.checkpoint = checkpoint(epoch);
      rep.checkpoints.push_back(*row.checkpoint);
    }
    metrics.push_back(row);
  };

  record(0, std::numeric_limits<double>::quiet_NaN());
  const std::size_t per_epoch = steps_per_epoch(cfg);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < per_epoch; ++s) {
      const StepDiagnostics d = baseline ? step_sogclr_baseline(opt, params, task, cfg.batch_size, cfg.loss, train)
                                         : step_unimodal(opt, params, task, cfg.batch_size, cfg.loss, train);
      for (std::size_t k = 0; k < d.g_batch.size(); ++k) {
        rep.min_g_seen = std::min(rep.min_g_seen, d.g_batch[k]);
        rep.min_s_seen = std::min(rep.min_s_seen, opt.anchors[d.batch.indices[k]].s);
      }
    }
    const double est = objective_estimate(opt.anchors, cfg.loss);
    rep.objective_estimate.push_back(est);
    record(epoch, est);
  }
  rep.steps = static_cast<std::size_t>(opt.step);

  rep.tau = taus_of(opt.anchors);
  rep.tau_summary = summarize_temperatures(rep.tau, ds.labels, ds.cluster_sizes);
  RandomStream knn_stream = root.split("knn");
  rep.knn_accuracy = knn_accuracy(encode(params, ds.inputs).rows, ds.labels, cfg.knn_k, cfg.held_out_fraction, knn_stream);
  if (!std::isfinite(rep.min_g_seen)) rep.min_g_seen = std::numeric_limits<double>::quiet_NaN();
  if (!std::isfinite(rep.min_s_seen)) rep.min_s_seen = std::numeric_limits<double>::quiet_NaN();
  rep.wall_clock_seconds = seconds_since(t0);

  if (write_files) {
    ensure_dir(cfg.out_dir);
    const std::filesystem::path out(cfg.out_dir);
    export_tau_csv(opt.anchors, ds.labels, out / "tau.csv");
    write_metrics_csv(metrics, out / "metrics.csv");
    save_encoder(params, out / "encoder.bin");
    save_optimizer(opt, out / "optimizer.bin");
    write_json(rep.to_json(), out / "report.json");
  }
  return rep;
}

Report run_train_bimodal(const ExperimentConfig& cfg, bool write_files) {
  cfg.validate();
  if (cfg.mode != TrainMode::bimodal) throw std::invalid_argument("run_train_bimodal: config mode is not bimodal");
  const auto t0 = std::chrono::steady_clock::now();

  const synth::BimodalSynthDataset ds = make_bimodal_dataset(cfg);
  const std::size_t n = ds.size();
  const RandomStream root(cfg.seed);
  EncoderParams image = init_encoder(cfg.image_dim, cfg.hidden_dim, cfg.embed_dim, cfg.activation, root.split("image_tower"));
  EncoderParams text = cfg.mirrored
                           ? image
                           : init_encoder(cfg.text_dim, cfg.hidden_dim, cfg.embed_dim, cfg.activation, root.split("text_tower"));
  BimodalOptimizerState opt =
      BimodalOptimizerState::create(n, image.param_count() + text.param_count(), cfg.loss, cfg.optimizer);
  const RandomStream train = root.split("train");

  Report rep;
  rep.config = cfg;
  rep.hash = config_hash(cfg);
  rep.min_g_seen = std::numeric_limits<double>::infinity();
  rep.min_s_seen = std::numeric_limits<double>::infinity();
  std::vector<MetricsRow> metrics;

  auto split_taus = [&]() {
    std::pair<Vector, Vector> t{Vector(n), Vector(n)};
    for (std::size_t i = 0; i < n; ++i) {
      t.first[i] = opt.anchors[i].image.tau;
      t.second[i] = opt.anchors[i].text.tau;
    }
    return t;
  };
  auto record = [&](std::size_t epoch, double estimate) {
    const auto [ti, tt] = split_taus();
    Vector all = ti;
    all.insert(all.end(), tt.begin(), tt.end());
    MetricsRow row{epoch, estimate, mean_of(all), stddev_of(all), std::nullopt};
    if (checkpoint_due(epoch, cfg)) {
      const FullGradient fg = full_gradient_bimodal(image, text, ds.pairs, ti, tt, cfg.loss);
      row.checkpoint = Checkpoint{epoch, fg.value, gradient_mapping_sq(fg, all, cfg.loss, n, true)};
      rep.checkpoints.push_back(*row.checkpoint);
    }
    metrics.push_back(row);
  };

  record(0, std::numeric_limits<double>::quiet_NaN());
  const std::size_t per_epoch = steps_per_epoch(cfg);
  std::vector<AnchorState> image_side(n), text_side(n);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < per_epoch; ++s) {
      const StepDiagnostics d = step_bimodal(opt, image, text, ds.pairs, cfg.batch_size, cfg.loss, train);
      for (double g : d.g_batch) rep.min_g_seen = std::min(rep.min_g_seen, g);
      for (std::size_t idx : d.batch.indices)
        rep.min_s_seen = std::min({rep.min_s_seen, opt.anchors[idx].image.s, opt.anchors[idx].text.s});
    }
    for (std::size_t i = 0; i < n; ++i) {
      image_side[i] = opt.anchors[i].image;
      text_side[i] = opt.anchors[i].text;
    }
    // the bimodal objective sums both directions
    const double est = objective_estimate(image_side, cfg.loss) + objective_estimate(text_side, cfg.loss);
    rep.objective_estimate.push_back(est);
    record(epoch, est);
  }
  rep.steps = static_cast<std::size_t>(opt.step);
  for (std::size_t i = 0; i < n; ++i) {
    image_side[i] = opt.anchors[i].image;
    text_side[i] = opt.anchors[i].text;
  }

  std::tie(rep.tau, rep.tau_text) = split_taus();
  rep.tau_summary = summarize_temperatures(rep.tau, ds.labels, ds.cluster_sizes);
  rep.tau_text_summary = summarize_temperatures(rep.tau_text, ds.labels, ds.cluster_sizes);
  RandomStream knn_stream = root.split("knn");
  rep.knn_accuracy = knn_accuracy(encode(image, ds.pairs.images).rows, ds.labels, cfg.knn_k, cfg.held_out_fraction, knn_stream);
  if (!std::isfinite(rep.min_g_seen)) rep.min_g_seen = std::numeric_limits<double>::quiet_NaN();
  if (!std::isfinite(rep.min_s_seen)) rep.min_s_seen = std::numeric_limits<double>::quiet_NaN();
  rep.wall_clock_seconds = seconds_since(t0);

  if (write_files) {
    ensure_dir(cfg.out_dir);
    const std::filesystem::path out(cfg.out_dir);
    export_tau_csv(image_side, ds.labels, out / "tau.csv");
    export_tau_csv(text_side, ds.labels, out / "tau_text.csv");
    write_metrics_csv(metrics, out / "metrics.csv");
    save_encoder(image, out / "encoder_image.bin");
    save_encoder(text, out / "encoder_text.bin");
    save_optimizer(opt, out / "optimizer.bin");
    write_json(rep.to_json(), out / "report.json");
  }
  return rep;
}

json run_gen_data(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(cfg.out_dir);
  const std::filesystem::path out(cfg.out_dir);
  json j;
  j["config"] = cfg.to_json();
  j["config_hash"] = config_hash(cfg);
  if (cfg.mode == TrainMode::bimodal) {
    const synth::BimodalSynthDataset ds = make_bimodal_dataset(cfg);
    synth::write_dataset_csv(ds.pairs.images, ds.labels, out / "dataset.csv");
    synth::write_dataset_csv(ds.pairs.texts, ds.labels, out / "dataset_text.csv");
    j["dataset"] = {{"rows", ds.size()}, {"cluster_sizes", ds.cluster_sizes},
                    {"files", {"dataset.csv", "dataset_text.csv"}}};
  } else {
    const synth::SynthDataset ds = make_unimodal_dataset(cfg);
    synth::write_dataset_csv(ds.inputs, ds.labels, out / "dataset.csv");
    j["dataset"] = {{"rows", ds.size()}, {"cluster_sizes", ds.cluster_sizes}, {"files", {"dataset.csv"}}};
  }
  j["wall_clock"] = {{"seconds", seconds_since(t0)}};
  write_json(j, out / "report.json");
  return j;
}

}  // namespace rgcl
