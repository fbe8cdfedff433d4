#include "fsloc/run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <set>
#include <sstream>

#include "fsloc/error.hpp"

namespace fsloc {
namespace pt = boost::property_tree;

namespace {

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  template <class T>
  void get(const std::string& key, T& into) {
    seen_.insert(key);
    auto node = tree_.get_child_optional(pt::ptree::path_type(key, '.'));
    if (!node) return;
    auto value = node->get_value_optional<T>();
    if (!value) throw ConfigError("bad value for '" + key + "': '" + node->data() + "'");
    into = *value;
  }

  void get_bool(const std::string& key, bool& into) {
    seen_.insert(key);
    auto node = tree_.get_child_optional(pt::ptree::path_type(key, '.'));
    if (!node) return;
    const auto& s = node->data();
    if (s == "true" || s == "1" || s == "yes" || s == "on") into = true;
    else if (s == "false" || s == "0" || s == "no" || s == "off") into = false;
    else throw ConfigError("bad boolean for '" + key + "': '" + s + "'");
  }

  std::optional<std::string> raw(const std::string& key) {
    seen_.insert(key);
    auto node = tree_.get_child_optional(pt::ptree::path_type(key, '.'));
    if (!node) return std::nullopt;
    return node->data();
  }

  void reject_unknown() const {
    for (const auto& [name, child] : tree_) {
      if (child.empty()) {
        if (!seen_.count(name)) throw ConfigError("unknown key '" + name + "'");
        continue;
      }
      for (const auto& [key, leaf] : child) {
        const auto full = name + "." + key;
        if (!seen_.count(full)) throw ConfigError("unknown key '" + full + "'");
      }
    }
  }

 private:
  const pt::ptree& tree_;
  std::set<std::string> seen_;
};

RunConfig from_tree(const pt::ptree& tree) {
  RunConfig c;
  Reader r(tree);
  r.get("seed", c.seed);
  if (auto out = r.raw("out")) c.out = *out;

  if (auto path = r.raw("data.path"); path && !path->empty()) c.dataset_path = *path;
  auto& s = c.synthesis;
  r.get("data.W", s.W);
  r.get("data.M", s.M);
  r.get("data.N", s.N);
  r.get("data.samples_per_source_location", s.samples_per_source_location);
  r.get("data.samples_per_target_location", s.samples_per_target_location);
  r.get("data.cluster_spread", s.cluster_spread);
  r.get("data.class_separation", s.class_separation);
  r.get("data.domain_shift", s.domain_shift);
  r.get("data.latent_rank", s.latent_rank);
  r.get("data.nuisance_rank", s.nuisance_rank);
  r.get("data.nuisance_scale", s.nuisance_scale);
  r.get("data.source_domain", c.source_domain);
  r.get("data.target_domain", c.target_domain);
  s.seed = c.seed;
  r.get("data.seed", s.seed);

  auto& g = c.model.gnn;
  auto& x = c.model.extractor;
  g.ways = s.N;
  r.get("model.N", g.ways);
  if (auto v = r.raw("model.variant")) g.variant = parse_variant(*v);
  r.get("model.layers", g.layers);
  r.get("model.leaky_slope", g.leaky_slope);
  r.get("model.beta", g.beta);
  r.get("model.gamma", g.gamma);
  r.get("model.cheb_n", g.cheb_order);
  if (auto lm = r.raw("model.lambda_max")) {
    if (*lm == "auto") {
      g.lambda_max = 0.0;
    } else {
      try {
        std::size_t used = 0;
        g.lambda_max = std::stod(*lm, &used);
        if (used != lm->size()) throw std::invalid_argument(*lm);
      } catch (const std::exception&) {
        throw ConfigError("bad value for 'model.lambda_max': '" + *lm + "'");
      }
    }
  }
  r.get_bool("model.symmetrize_laplacian", g.symmetrize_laplacian);
  r.get_bool("model.egnn_double_softmax", g.egnn_double_softmax);
  r.get("model.label_readout_gain", g.label_readout_gain);
  r.get("model.d", x.d);
  r.get("model.channels", x.channels);
  r.get("model.kernel", x.kernel);
  r.get("model.stages", x.stages);
  g.feature_dim = x.d;

  r.get("train.K", c.K);
  c.K_s = s.samples_per_source_location;
  r.get("train.K_s", c.K_s);
  r.get("train.episodes_total", c.episodes_total);
  r.get("train.episode_batch", c.episode_batch);
  r.get("train.lr", c.adam.lr);
  r.get("train.weight_decay", c.adam.weight_decay);
  r.get("train.pretrain_epochs", c.pretrain_epochs);
  r.get("train.finetune_epochs", c.finetune_epochs);
  r.get("train.classifier_batch", c.classifier_batch);
  r.get("train.baseline_epochs", c.baseline_epochs);
  r.get_bool("train.freeze_extractor", c.freeze_extractor);
  r.get("train.snapshot_every", c.snapshot_every);
  r.get("train.early_stop_patience", c.early_stop_patience);
  r.get("train.validation_every", c.validation_every);
  r.get("train.validation_episodes", c.validation_episodes);
  r.get("train.threads", c.threads);

  r.get("eval.draws", c.eval_draws);
  r.reject_unknown();
  return c;
}

}  // namespace

void RunConfig::validate() const {
  if (!dataset_path) synthesis.validate();
  if (source_domain == target_domain) throw ConfigError("source and target domain must differ");
  model.gnn.validate();
  if (K < 1) throw ConfigError("K must be >= 1");
  if (K_s < 1) throw ConfigError("K_s must be >= 1");
  if (episode_batch < 1) throw ConfigError("episode_batch must be >= 1");
  if (eval_draws < 1) throw ConfigError("eval draws must be >= 1");
  if (!(adam.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (adam.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (classifier_batch < 2) throw ConfigError("classifier_batch must be >= 2 (batch norm)");
  if (model.extractor.stages < 1 || model.extractor.kernel < 1 || model.extractor.channels < 1)
    throw ConfigError("extractor needs stages, kernel and channels >= 1");
  if (early_stop_patience > 0 && (validation_every < 1 || validation_episodes < 1))
    throw ConfigError("early stopping needs validation_every and validation_episodes >= 1");
  if (!dataset_path && model.gnn.ways != synthesis.N)
    throw ConfigError("N = " + std::to_string(model.gnn.ways) + " but the synthetic target domain has " +
                      std::to_string(synthesis.N) + " locations");
}

RunConfig parse_run_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return from_tree(tree);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_run_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_run_config(const RunConfig& c) {
  const auto& s = c.synthesis;
  const auto& g = c.model.gnn;
  const auto& x = c.model.extractor;
  std::ostringstream o;
  o.precision(17);
  o << "seed = " << c.seed << "\nout = " << c.out.string() << "\n\n[data]\n";
  if (c.dataset_path) o << "path = " << c.dataset_path->string() << "\n";
  o << "W = " << s.W << "\nM = " << s.M << "\nN = " << s.N
    << "\nsamples_per_source_location = " << s.samples_per_source_location
    << "\nsamples_per_target_location = " << s.samples_per_target_location << "\ncluster_spread = " << s.cluster_spread
    << "\nclass_separation = " << s.class_separation << "\ndomain_shift = " << s.domain_shift
    << "\nlatent_rank = " << s.latent_rank << "\nnuisance_rank = " << s.nuisance_rank
    << "\nnuisance_scale = " << s.nuisance_scale << "\nseed = " << s.seed << "\nsource_domain = " << c.source_domain
    << "\ntarget_domain = " << c.target_domain << "\n\n[model]\nN = " << g.ways
    << "\nvariant = " << to_string(g.variant)
    << "\nlayers = " << g.layers << "\nleaky_slope = " << g.leaky_slope << "\nbeta = " << g.beta
    << "\ngamma = " << g.gamma << "\ncheb_n = " << g.cheb_order << "\nlambda_max = ";
  if (g.lambda_max > 0.0) o << g.lambda_max;
  else o << "auto";
  o << "\nsymmetrize_laplacian = " << (g.symmetrize_laplacian ? "true" : "false")
    << "\negnn_double_softmax = " << (g.egnn_double_softmax ? "true" : "false")
    << "\nlabel_readout_gain = " << g.label_readout_gain << "\nd = " << x.d << "\nchannels = " << x.channels
    << "\nkernel = " << x.kernel << "\nstages = " << x.stages << "\n\n[train]\nK = " << c.K
    << "\nK_s = " << c.K_s << "\nepisodes_total = " << c.episodes_total << "\nepisode_batch = " << c.episode_batch
    << "\nlr = " << c.adam.lr << "\nweight_decay = " << c.adam.weight_decay << "\npretrain_epochs = " << c.pretrain_epochs
    << "\nfinetune_epochs = " << c.finetune_epochs << "\nclassifier_batch = " << c.classifier_batch
    << "\nbaseline_epochs = " << c.baseline_epochs
    << "\nfreeze_extractor = " << (c.freeze_extractor ? "true" : "false") << "\nsnapshot_every = " << c.snapshot_every
    << "\nearly_stop_patience = " << c.early_stop_patience << "\nvalidation_every = " << c.validation_every
    << "\nvalidation_episodes = " << c.validation_episodes << "\nthreads = " << c.threads << "\n\n[eval]\ndraws = "
    << c.eval_draws << "\n";
  return o.str();
}

}  // namespace fsloc
