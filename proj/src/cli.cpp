#include "ihas/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ihas/errors.hpp"
#include "ihas/pipeline.hpp"

namespace ihas {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string data_path;
    std::string schema_path;
    std::string out_dir = "out";
    std::map<std::string, std::string> overrides;
};

void add_common_options(CLI::App* cmd, CommonArgs& args, bool wants_data) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    if (wants_data) {
        cmd->add_option("--data", args.data_path, "CSV dataset (header row)")->required();
        cmd->add_option("--schema", args.schema_path, "JSON schema file")->required();
    }
    cmd->add_option("--out", args.out_dir, "output directory");

    // flag overrides land on top of file values
    auto override_opt = [&args, cmd](const std::string& flag, const std::string& key,
                                     const std::string& help) {
        cmd->add_option_function<std::string>(
               flag, [&args, key](const std::string& v) { args.overrides[key] = v; }, help)
            ->expected(1);
    };
    override_opt("--seed", "seed", "RNG seed");
    override_opt("--k", "k", "number of clusters");
    override_opt("--lambda", "lambda", "sparsity/polarization strength");
    override_opt("--tau", "tau", "Gumbel-Softmax temperature");
    override_opt("--batch", "batch_size", "mini-batch size");
    override_opt("--d", "d", "embedding dimension");
    override_opt("--val-every", "val_every", "training batches per gate update");
    override_opt("--pretrain-epochs", "pretrain_epochs", "pretraining epochs");
    cmd->add_option_function<std::string>(
           "--epochs",
           [&args](const std::string& v) {
               args.overrides["max_search_epochs"] = v;
               args.overrides["max_retrain_epochs"] = v;
           },
           "cap on search and retrain epochs")
        ->expected(1);
}

PipelineConfig resolve_config(const CommonArgs& args) {
    return parse_config(args.config_path, args.overrides);
}

std::string ckpt_path(const CommonArgs& args, Stage stage) {
    return args.out_dir + "/" + stage_name(stage) + ".ckpt";
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

void write_manifest(const CommonArgs& args, const PipelineConfig& cfg,
                    const IngestedData* data, const std::vector<std::string>& outputs) {
    json m;
    m["config"] = json::parse(config_to_json(cfg));
    m["seed"] = cfg.seed;
    if (!args.data_path.empty()) {
        m["data_path"] = args.data_path;
        m["data_hash"] = file_hash(args.data_path);
    }
    if (!args.schema_path.empty()) {
        m["schema_path"] = args.schema_path;
        m["schema_hash"] = file_hash(args.schema_path);
    }
    if (data) {
        m["split_sizes"] = {{"train", data->split.train.size()},
                            {"val", data->split.val.size()},
                            {"test", data->split.test.size()}};
        m["schema_fingerprint"] = schema_hash(data->schema);
    }
    m["outputs"] = outputs;
    fs::create_directories(args.out_dir);
    write_file(args.out_dir + "/manifest.json", m.dump(2) + "\n");
}

void attach_logger(PipelineState& state) {
    state.log_sink = [](const std::string& line) { std::cout << line << "\n"; };
}

PipelineState load_stage_checkpoint(const CommonArgs& args, Stage wanted, const char* verb) {
    const std::string path = ckpt_path(args, wanted);
    if (!fs::exists(path))
        throw PipelineError(std::string(verb) + " requires a " + stage_name(wanted) +
                            " checkpoint at " + path);
    auto state = load_checkpoint(path);
    attach_logger(state);
    return state;
}

// Re-encode the dataset the way the checkpointed run saw it (same seed, same
// schema); guards against pointing a checkpoint at different data.
IngestedData reingest_for(const PipelineState& state, const CommonArgs& args) {
    auto data = ingest_csv(args.data_path, args.schema_path, state.config);
    if (schema_hash(data.schema) != state.schema_fingerprint)
        throw DataError("schema does not match the checkpointed run");
    return data;
}

void save_stage(PipelineState& state, const CommonArgs& args, std::vector<std::string>& outputs) {
    fs::create_directories(args.out_dir);
    const std::string path = ckpt_path(args, state.stage);
    save_checkpoint(state, path);
    outputs.push_back(path);
    std::cout << json{{"event", "checkpoint"}, {"stage", stage_name(state.stage)}, {"path", path}}
                     .dump()
              << "\n";
}

void write_report(const MetricsReport& report, const CommonArgs& args,
                  std::vector<std::string>& outputs) {
    fs::create_directories(args.out_dir);
    write_file(args.out_dir + "/report.json", report.to_json() + "\n");
    write_file(args.out_dir + "/report.txt", report.to_text());
    outputs.push_back(args.out_dir + "/report.json");
    if (!report.dims_per_cluster.empty()) {
        write_file(args.out_dir + "/dims.csv", report.dims_csv());
        outputs.push_back(args.out_dir + "/dims.csv");
    }
    std::cout << report.to_text();
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

int cmd_synth(const CommonArgs& args, const SyntheticConfig& synth_cfg, std::uint64_t seed) {
    RngStream rng = derive_stream(seed, "synthetic");
    const auto data = generate_synthetic(synth_cfg, rng);
    const auto csv = write_synthetic_dataset(data, synth_cfg, args.out_dir);
    std::cout << json{{"event", "synth"},
                      {"csv", csv},
                      {"samples", data.labels.size()},
                      {"fields", synth_cfg.n_fields}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_ingest(const CommonArgs& args) {
    const auto cfg = resolve_config(args);
    const auto data = ingest_csv(args.data_path, args.schema_path, cfg);

    json stats;
    stats["split_sizes"] = {{"train", data.split.train.size()},
                            {"val", data.split.val.size()},
                            {"test", data.split.test.size()}};
    stats["fields"] = json::array();
    for (std::size_t f = 0; f < data.schema.fields.size(); ++f)
        stats["fields"].push_back({{"name", data.schema.fields[f].name},
                                   {"vocab_size", data.schema.fields[f].vocab_size}});
    fs::create_directories(args.out_dir);
    write_file(args.out_dir + "/ingest.json", stats.dump(2) + "\n");
    std::cout << stats.dump(2) << "\n";

    write_manifest(args, cfg, &data, {args.out_dir + "/ingest.json"});
    return 0;
}

int cmd_search(const CommonArgs& args) {
    const auto cfg = resolve_config(args);
    const auto data = ingest_csv(args.data_path, args.schema_path, cfg);

    auto state = make_pipeline(cfg, data.schema, data.vocab);
    attach_logger(state);

    std::vector<std::string> outputs;
    pretrain_stage(state, data.split.train);
    save_stage(state, args, outputs);
    search_stage(state, data.split.train, data.split.val);
    save_stage(state, args, outputs);
    write_manifest(args, cfg, &data, outputs);
    return 0;
}

int cmd_cluster(const CommonArgs& args) {
    auto state = load_stage_checkpoint(args, Stage::searched, "cluster");
    const auto data = reingest_for(state, args);

    std::vector<std::string> outputs;
    cluster_stage(state, data.split.train);
    save_stage(state, args, outputs);
    write_manifest(args, state.config, &data, outputs);
    return 0;
}

int cmd_retrain(const CommonArgs& args) {
    auto state = load_stage_checkpoint(args, Stage::clustered, "retrain");
    const auto data = reingest_for(state, args);

    std::vector<std::string> outputs;
    derive_cluster_dims(state, data.split.train);
    retrain_stage(state, data.split.train, data.split.val);
    save_stage(state, args, outputs);
    write_manifest(args, state.config, &data, outputs);
    return 0;
}

int cmd_run_all(const CommonArgs& args) {
    const auto cfg = resolve_config(args);
    const auto data = ingest_csv(args.data_path, args.schema_path, cfg);

    auto state = make_pipeline(cfg, data.schema, data.vocab);
    attach_logger(state);

    std::vector<std::string> outputs;
    pretrain_stage(state, data.split.train);
    save_stage(state, args, outputs);
    search_stage(state, data.split.train, data.split.val);
    save_stage(state, args, outputs);
    cluster_stage(state, data.split.train);
    save_stage(state, args, outputs);
    derive_cluster_dims(state, data.split.train);
    retrain_stage(state, data.split.train, data.split.val);
    save_stage(state, args, outputs);

    const auto report = evaluate(state, data.split.test);
    write_report(report, args, outputs);
    write_manifest(args, cfg, &data, outputs);
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    // newest stage available wins
    PipelineState state = [&] {
        for (Stage s : {Stage::retrained, Stage::clustered, Stage::searched}) {
            if (fs::exists(ckpt_path(args, s))) return load_stage_checkpoint(args, s, "eval");
        }
        throw PipelineError("eval requires a searched (or later) checkpoint under " + args.out_dir);
    }();
    const auto data = reingest_for(state, args);

    std::vector<std::string> outputs;
    const auto report = evaluate(state, data.split.test);
    write_report(report, args, outputs);
    write_manifest(args, state.config, &data, outputs);
    return 0;
}

int cmd_predict(const CommonArgs& args) {
    auto state = load_stage_checkpoint(args, Stage::retrained, "predict");

    const RawTable table = read_csv(args.data_path);
    DatasetSchema schema = load_schema(args.schema_path);
    if (schema_hash(schema) != state.schema_fingerprint)
        throw DataError("schema does not match the checkpointed run");
    const auto cols = resolve_field_columns(table, schema);

    // label column is optional when scoring
    bool has_label = true;
    std::size_t label_col = 0;
    try {
        label_col = resolve_label_column(table, schema);
    } catch (const EncodingError&) {
        has_label = false;
    }

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        EncodedSample s;
        if (has_label) {
            s = encode(table, r, state.schema, state.vocab, cols, label_col);
        } else {
            for (std::size_t f = 0; f < schema.fields.size(); ++f) {
                const std::string token = schema.fields[f].kind == FieldKind::numerical
                                              ? numeric_token(table.rows[r][cols[f]], schema.fields[f])
                                              : table.rows[r][cols[f]];
                s.field_indices.push_back(state.vocab.lookup(f, token));
            }
        }
        std::cout << predict(state, s) << "\n";
    }
    return 0;
}

int cmd_inspect_dims(const CommonArgs& args) {
    auto state = load_stage_checkpoint(args, Stage::retrained, "inspect-dims");
    if (state.cluster_specs.empty())
        throw PipelineError("inspect-dims: checkpoint has no cluster dimension specs");

    std::cout << "field";
    for (std::size_t c = 0; c < state.cluster_specs.size(); ++c) std::cout << "\tcluster_" << c;
    std::cout << "\n";
    for (std::size_t f = 0; f < state.schema.fields.size(); ++f) {
        std::cout << state.schema.fields[f].name;
        for (const auto& spec : state.cluster_specs) std::cout << "\t" << spec.dims_per_field[f];
        std::cout << "\n";
    }
    return 0;
}

int classify_and_report(const std::exception& e, const char* category, int code) {
    std::cerr << "error: " << category << ": " << e.what() << "\n";
    return code;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"instance-wise embedding-dimension search for CTR models"};
    app.require_subcommand(1);

    CommonArgs common;

    // synth-specific knobs
    SyntheticConfig synth_cfg;
    std::uint64_t synth_seed = 17;
    std::size_t synth_vocab = 8;
    std::string relevant_spec = "0,1,2;3,4,5";

    auto* synth = app.add_subcommand("synth", "generate a planted-structure synthetic dataset");
    add_common_options(synth, common, false);
    synth->add_option("--n", synth_cfg.n_samples, "number of samples");
    synth->add_option("--fields", synth_cfg.n_fields, "number of fields");
    synth->add_option("--vocab", synth_vocab, "categories per field");
    synth->add_option("--scale", synth_cfg.coef_scale, "logistic coefficient scale");
    synth->add_option("--relevant", relevant_spec,
                      "per-group relevant fields, e.g. '0,1,2;3,4,5'");
    synth->add_option("--synth-seed", synth_seed, "generator seed");

    auto* ingest = app.add_subcommand("ingest", "build vocabulary and report dataset statistics");
    add_common_options(ingest, common, true);

    auto* search = app.add_subcommand("search", "pretrain the base model and run the gate search");
    add_common_options(search, common, true);

    auto* cluster = app.add_subcommand("cluster", "cluster masked representations (needs searched.ckpt)");
    add_common_options(cluster, common, true);

    auto* retrain = app.add_subcommand("retrain", "derive dimensions and retrain per-cluster models");
    add_common_options(retrain, common, true);

    auto* run_all = app.add_subcommand("run-all", "search, cluster, retrain and evaluate");
    add_common_options(run_all, common, true);

    auto* eval = app.add_subcommand("eval", "evaluate the newest checkpoint on the test split");
    add_common_options(eval, common, true);

    auto* predict_cmd = app.add_subcommand("predict", "score rows with the retrained pipeline");
    add_common_options(predict_cmd, common, true);

    auto* inspect = app.add_subcommand("inspect-dims", "print per-cluster per-field dimension counts");
    add_common_options(inspect, common, false);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << "error: config-error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (synth->parsed()) {
            synth_cfg.vocab_sizes = {synth_vocab};
            synth_cfg.relevant_fields.clear();
            std::stringstream groups(relevant_spec);
            std::string group;
            while (std::getline(groups, group, ';')) {
                std::vector<std::size_t> fields;
                std::stringstream fs_(group);
                std::string tok;
                while (std::getline(fs_, tok, ','))
                    if (!tok.empty()) fields.push_back(std::stoul(tok));
                synth_cfg.relevant_fields.push_back(std::move(fields));
            }
            synth_cfg.n_groups = synth_cfg.relevant_fields.size();
            return cmd_synth(common, synth_cfg, synth_seed);
        }
        if (ingest->parsed()) return cmd_ingest(common);
        if (search->parsed()) return cmd_search(common);
        if (cluster->parsed()) return cmd_cluster(common);
        if (retrain->parsed()) return cmd_retrain(common);
        if (run_all->parsed()) return cmd_run_all(common);
        if (eval->parsed()) return cmd_eval(common);
        if (predict_cmd->parsed()) return cmd_predict(common);
        if (inspect->parsed()) return cmd_inspect_dims(common);
        std::cerr << "error: config-error: no subcommand given\n";
        return 1;
    } catch (const PipelineError& e) {
        return classify_and_report(e, "stage-precondition", 2);
    } catch (const ConfigError& e) {
        return classify_and_report(e, "config-error", 1);
    } catch (const EncodingError& e) {
        return classify_and_report(e, "data-error", 1);
    } catch (const DataError& e) {
        return classify_and_report(e, "data-error", 1);
    } catch (const ClusteringError& e) {
        return classify_and_report(e, "clustering-error", 1);
    } catch (const MetricError& e) {
        return classify_and_report(e, "metric-error", 1);
    } catch (const NumericError& e) {
        return classify_and_report(e, "numeric-error", 1);
    } catch (const ShapeError& e) {
        return classify_and_report(e, "shape-error", 1);
    } catch (const IoError& e) {
        return classify_and_report(e, "io-error", 1);
    } catch (const std::exception& e) {
        return classify_and_report(e, "internal", 1);
    }
}

} // namespace ihas
