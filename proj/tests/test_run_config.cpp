#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fsloc/error.hpp"
#include "fsloc/run_config.hpp"

using namespace fsloc;

TEST_CASE("defaults") {
  const auto c = parse_run_config("");
  CHECK(c.eval_draws == 6400);
  CHECK(c.adam.lr == 0.01);
  CHECK(c.adam.weight_decay == 1e-6);
  CHECK(c.episode_batch == 20);
  CHECK(c.episodes_total == 10000);
  CHECK(c.synthesis.W == 32);
  CHECK(c.synthesis.M == 8);
  CHECK(c.ways() == 6);
  CHECK(c.K_s == 100);
  CHECK(c.model.gnn.layers == 2);
  CHECK(c.model.gnn.beta == 0.5);
  CHECK(c.model.gnn.gamma == 1.0);
  CHECK(c.model.gnn.cheb_order == 3);
  CHECK(c.model.gnn.lambda_max == 2.0);
  CHECK_FALSE(c.freeze_extractor);
  CHECK_FALSE(c.dataset_path);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("sections and derived values") {
  const auto c = parse_run_config(R"(seed = 9
out = runs/x

[data]
W = 16
N = 4
samples_per_source_location = 50
class_separation = 2.5

[model]
variant = chebynet
lambda_max = auto
cheb_n = 2
symmetrize_laplacian = false

[train]
K = 10
freeze_extractor = yes
lr = 0.005

[eval]
draws = 100
)");
  CHECK(c.seed == 9);
  CHECK(c.out == "runs/x");
  CHECK(c.synthesis.seed == 9);
  CHECK(c.synthesis.W == 16);
  CHECK(c.ways() == 4);
  CHECK(c.K_s == 50);
  CHECK(c.model.gnn.variant == Variant::ChebyNet);
  CHECK(c.model.gnn.lambda_max == 0.0);
  CHECK(c.model.gnn.cheb_order == 2);
  CHECK_FALSE(c.model.gnn.symmetrize_laplacian);
  CHECK(c.K == 10);
  CHECK(c.freeze_extractor);
  CHECK(c.adam.lr == 0.005);
  CHECK(c.eval_draws == 100);
  CHECK(c.model.gnn.feature_dim == c.model.extractor.d);
}

TEST_CASE("format round-trips through the parser") {
  auto c = parse_run_config("[model]\nvariant = attentive\nbeta = 0.25\n[train]\nK = 1\n");
  c.synthesis.class_separation = 1.0 / 3.0;
  const auto back = parse_run_config(format_run_config(c));
  CHECK(format_run_config(back) == format_run_config(c));
  CHECK(back.synthesis.class_separation == c.synthesis.class_separation);
  CHECK(back.model.gnn.variant == Variant::Attentive);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(parse_run_config("[train]\nepisodes = 5\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train]\nK = five\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[model]\nvariant = mlp\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[model]\nlambda_max = 2x\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train]\nfreeze_extractor = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[data\nW = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[eval]\ndraws = 0\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[model]\nN = 5\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[model]\nvariant = attentive\nbeta = 0\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[data]\ncluster_spread = 0\n").validate(), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/dir/run.ini"), IoError);
}

TEST_CASE("shipped configs parse and validate") {
  for (const char* name : {"easy.ini", "hard.ini", "case1.ini"}) {
    CAPTURE(name);
    const auto c = load_run_config(std::filesystem::path(FSLOC_SOURCE_DIR) / "configs" / name);
    CHECK_NOTHROW(c.validate());
  }
}
