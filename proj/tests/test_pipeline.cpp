#include <doctest.h>

#include <omp.h>

#include "asd/error.hpp"
#include "asd/pipeline.hpp"
#include "asd/segmentation.hpp"
#include "support.hpp"

using namespace asd;

namespace {

struct Small {
  Corpus corpus;
  std::vector<SeedLabel> labels;
  PipelineConfig cfg;
};

Small small_corpus(std::uint64_t seed) {
  Small s;
  s.cfg.seed = seed;
  s.cfg.synth.seed = seed;
  s.cfg.synth.n_trips = 8;
  s.cfg.synth.n_abnormal = 5;
  s.cfg.train.epochs = 120;
  s.corpus = generate(s.cfg.synth);
  s.labels = default_seed_labels(s.corpus.truth);
  return s;
}

}  // namespace

TEST_CASE("config json roundtrip and strict keys") {
  PipelineConfig cfg;
  cfg.seed = 99;
  cfg.variant = Variant::NoRescale;
  cfg.backend = kernels::Backend::OpenMP;
  cfg.alpha = 1.5;
  cfg.ltiga.k = 7;
  cfg.train.tau = 0.95;
  cfg.ingest.delimiter = ';';
  cfg.synth.normal_stops = {{5.0, 100.0}};
  const auto j = asd::to_json(cfg);
  const auto back = config_from_json(j);
  CHECK(asd::to_json(back).dump() == j.dump());
  CHECK(back.ltiga.k == 7);
  CHECK(back.variant == Variant::NoRescale);

  // missing keys keep the base
  auto partial = config_from_json(nlohmann::json::parse(R"({"segmentation": {"alpha": 3.0}})"), cfg);
  CHECK(partial.alpha == 3.0);
  CHECK(partial.seed == 99);

  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"alhpa": 3.0})")), SchemaError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"segmentation": {"alhpa": 3.0}})")), SchemaError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"train": {"epoch": 3}})")), SchemaError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"segmentation": {"alpha": "big"}})")), SchemaError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"backend": "gpu"})")), SchemaError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"eval": {"decision_threshold": 1.5}})")).validate(),
                  PreconditionError);
}

TEST_CASE("variant names") {
  for (Variant v : all_variants()) {
    CHECK(variant_from_string(to_string(v)) == v);
    CHECK(variant_from_string(variant_flag(v)) == v);
  }
  CHECK(variant_from_string("GCN-ONLY") == Variant::GcnOnly);
  CHECK(variant_from_string("noltiga") == Variant::NoLtiga);
  CHECK_THROWS_AS(variant_from_string("nope"), PreconditionError);
  CHECK(all_variants().size() == 5);
}

TEST_CASE("seed resolution") {
  std::vector<NodeFeature> f(3);
  for (std::size_t i = 0; i < 3; ++i) {
    f[i].node_id = i;
    f[i].trip_id = i < 2 ? "a" : "b";
    f[i].lng = 116.3;
    f[i].lat = 39.9 + 0.001 * static_cast<double>(i);  // ~111 m apart
  }
  SeedLabel near;
  near.lng = 116.3;
  near.lat = 39.9012;
  near.radius_m = 100;
  near.cls = kAbnormal;
  auto s = resolve_seeds({near}, f);
  REQUIRE(s.size() == 1);
  CHECK(s.begin()->first == 1);

  near.trip_id = "b";  // only node 2 is eligible, ~88 m away
  s = resolve_seeds({near}, f);
  CHECK(s.begin()->first == 2);

  SeedLabel far = near;
  far.lat = 40.5;
  std::vector<std::string> miss;
  CHECK(resolve_seeds({far}, f, &miss).empty());
  CHECK(miss.size() == 1);

  SeedLabel by_id;
  by_id.node_id = 0;
  by_id.cls = kNormal;
  SeedLabel clash = by_id;
  clash.cls = kAbnormal;
  CHECK(resolve_seeds({by_id}, f).at(0) == kNormal);
  CHECK_THROWS_AS(resolve_seeds({by_id, clash}, f), PreconditionError);
}

TEST_CASE("pipeline is deterministic and backend independent") {
  Small s = small_corpus(3);
  auto a = run_pipeline(s.corpus.trips, s.labels, s.corpus.truth, s.cfg);
  auto b = run_pipeline(s.corpus.trips, s.labels, s.corpus.truth, s.cfg);
  CHECK(asd::to_json(a.report).dump() == asd::to_json(b.report).dump());
  CHECK(a.training.final.model.params == b.training.final.model.params);

  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
  PipelineConfig par = s.cfg;
  par.backend = kernels::Backend::OpenMP;
  auto c = run_pipeline(s.corpus.trips, s.labels, s.corpus.truth, par);
  omp_set_num_threads(saved);
  CHECK(asd::to_json(c.report).dump() == asd::to_json(a.report).dump());

  CHECK(asd::to_json(run_ablation(s.corpus.trips, s.labels, s.corpus.truth, s.cfg, Variant::Full)).dump() ==
        asd::to_json(a.report).dump());

  // report bookkeeping
  CHECK(a.report.variant == "Full");
  CHECK(a.report.nodes == a.graph.size());
  CHECK(a.report.edges == a.graph.edges().size());
  CHECK(a.report.auc >= 0.0);
  CHECK(a.report.auc <= 1.0);
  CHECK(a.report.evaluated_positive > 0);
  CHECK(a.report.evaluated_positive < a.report.evaluated_nodes);
  CHECK(a.report.evaluated_nodes + a.propagation.seeds.size() == a.report.nodes);
}

TEST_CASE("variants switch the intended stages") {
  Small s = small_corpus(4);
  auto full = run_pipeline(s.corpus.trips, s.labels, s.corpus.truth, s.cfg);

  PipelineConfig c = s.cfg;
  c.variant = Variant::NoLtiga;
  auto no_ltiga = run_pipeline(s.corpus.trips, s.labels, s.corpus.truth, c);
  for (const auto& f : no_ltiga.refined) CHECK(f.refined == f.raw());
  CHECK(no_ltiga.segments.size() == full.segments.size());

  c.variant = Variant::FixedSeg;
  auto fixed = run_pipeline(s.corpus.trips, s.labels, s.corpus.truth, c);
  REQUIRE(fixed.segments.size() == s.corpus.trips.size());
  for (std::size_t k = 0; k < fixed.segments.size(); ++k) {
    auto expect = segment_fixed(s.corpus.trips[k], c.fixed_interval_m);
    REQUIRE(fixed.segments[k].size() == expect.size());
    for (std::size_t q = 0; q < expect.size(); ++q) {
      CHECK(fixed.segments[k][q].start_idx == expect[q].start_idx);
      CHECK(fixed.segments[k][q].end_idx == expect[q].end_idx);
    }
  }
  CHECK(fixed.report.variant == "FixedSeg");

  c.variant = Variant::NoRescale;
  auto no_rescale = run_pipeline(s.corpus.trips, s.labels, s.corpus.truth, c);
  CHECK(no_rescale.ltiga_report.nodes_smoothed == full.ltiga_report.nodes_smoothed);
  for (std::size_t i = 0; i < no_rescale.refined.size(); ++i) {
    const auto& f = no_rescale.refined[i];
    CHECK(f.smoothed == full.refined[i].smoothed);
    if (!f.smoothed) CHECK(f.refined == f.raw());
  }

  c.variant = Variant::GcnOnly;
  auto gcn_only = run_pipeline(s.corpus.trips, s.labels, s.corpus.truth, c);
  for (std::size_t i = 0; i < gcn_only.graph.size(); ++i)
    CHECK(gcn_only.graph.nodes()[i].x == gcn_only.indicators[i].raw());
}

TEST_CASE("ground truth on nodes") {
  Small s = small_corpus(5);
  auto r = run_pipeline(s.corpus.trips, s.labels, s.corpus.truth, s.cfg);
  auto y = node_truth(r.refined, s.corpus.truth, s.cfg.truth_radius_m);
  REQUIRE(y.size() == r.refined.size());
  std::size_t pos = 0;
  for (int v : y) pos += v == 1;
  CHECK(pos >= s.corpus.truth.abnormal.size());
}

TEST_CASE("sensitivity argument checks") {
  Small s = small_corpus(6);
  CHECK_THROWS_AS(label_sensitivity(s.corpus.trips, s.corpus.truth, s.cfg, {6}, 1), PreconditionError);
  CHECK_THROWS_AS(label_sensitivity(s.corpus.trips, s.corpus.truth, s.cfg, {2}, 0), PreconditionError);
  auto rows = label_sensitivity(s.corpus.trips, s.corpus.truth, s.cfg, {2}, 2);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].runs.size() == 2);
  CHECK(rows[0].k == 2);
}
