#pragma once

// Command-line pipeline: one JSON run configuration, one artifact directory, one stage
// per subcommand. Each stage writes `stage.json` next to its outputs recording the
// configuration hash it was produced under; downstream stages refuse artifacts whose
// hash does not match the current configuration.
//
// Layout under paths.output:
//   synth/      corpus.jsonl, future.jsonl, background.txt, lexicon.txt, ground_truth.json
//   ingest/     users.json, context.json, vocab.json, background.json, windows/*.jsonl
//   matrices/   bundle/ (per window), pooled/ (all windows as one)
//   model/      trained EmbeddingSet, trace.json
//   recon/      metrics.json
//   clusters/   clusters_K<K>.json, centroids_K<K>.cerb
//   purity/     purity.json
//   forecast/   forecaster/, splits.json, metrics.json
//   predict/    predictions.csv, metrics.json
//   relevance/  relevance.csv
//   concept/    concept_<lexicon>.csv, summary.json
//   project/    trajectory_<user>.json
//   runlog/     <stage>.json (wall time and versions; not reproducible by design)

#include "cerberus/cluster.hpp"
#include "cerberus/corpus.hpp"
#include "cerberus/forecast.hpp"
#include "cerberus/matrices.hpp"
#include "cerberus/model.hpp"
#include "cerberus/syndata.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cerberus {

struct RunPaths {
    std::string corpus;      // empty: use synth/corpus.jsonl
    std::string background;  // empty: use synth/background.txt
    std::string future;      // optional window after the training period
    std::string output = "out";
    std::vector<std::string> lexicons;  // empty: synth/lexicon.txt when synthesising
};

struct ClusteringConfig {
    std::vector<int> K_list{10};
    int n_seeds = 5;
    int max_iters = 300;
    int K = 0;  // clustering used by relevance/concept; 0 means K_list[0]
    bool size_weighted = false;
};

struct AnalysisConfig {
    std::vector<std::string> words;
    std::vector<std::string> users;
    bool time_averaged_concept = false;
    std::size_t min_cluster_size = 0;
};

struct RunConfig {
    std::uint64_t seed = 0;
    RunPaths paths;
    TimeWindowing windowing;
    FilterConfig filter;
    ModelConfig model;
    ForecasterConfig forecaster;
    ClusteringConfig clustering;
    double holdout_fraction = 0.1;
    std::vector<LabelLevel> label_levels{LabelLevel::category, LabelLevel::community};
    SynthConfig synth;
    AnalysisConfig analysis;

    bool uses_synth() const { return paths.corpus.empty(); }
    std::filesystem::path out() const { return paths.output; }
};

/// Rejects unknown keys and ill-typed values with ConfigError.
RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json load_config_file(const std::filesystem::path& path);

/// "a.b.c=value": value parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

const std::vector<std::string>& stage_names();

/// Hash of every configuration value the stage (and its upstream stages) depend on.
std::string stage_hash(const RunConfig& cfg, const std::string& stage);

void run_stage(const std::string& stage, const RunConfig& cfg);

/// Every stage in order; predict, relevance and concept are skipped when they lack input.
void run_all(const RunConfig& cfg);

/// MissingArtifact -> 2, ConfigError -> 3, anything else -> 1.
int exit_code_for(const std::exception& e);

struct Prepared {
    std::vector<Bucket> buckets;
    NameIndex roster, context, vocab;
    MatrixBundle bundle;  // one matrix pair per window
    MatrixBundle pooled;  // all windows as one (time-aggregated variants)
};

/// Windowing, filtering, vocabulary and both bundles from an in-memory corpus.
Prepared prepare(const CorpusStore& corpus, const TimeWindowing& w, const FilterConfig& f,
                 const BackgroundModel& bg);

}  // namespace cerberus
