#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ihas/errors.hpp"
#include "ihas/pipeline.hpp"

namespace ihas {

using nlohmann::json;

namespace {

constexpr const char* kMagic = "IHAS-CKPT-v1\n";

struct TensorSlot {
    std::string name;
    std::size_t rows = 0, cols = 0;
    std::vector<double>* data = nullptr;
};

void add_slot(std::vector<TensorSlot>& slots, const std::string& name, DenseMatrix& m) {
    slots.push_back({name, m.rows, m.cols, &m.values});
}

void add_slot(std::vector<TensorSlot>& slots, const std::string& name, std::vector<double>& v) {
    slots.push_back({name, 1, v.size(), &v});
}

void collect_adam(std::vector<TensorSlot>& slots, json& adam_meta, AdamState& s) {
    adam_meta[s.name] = {{"step", s.step},
                         {"lr", s.lr},
                         {"beta1", s.beta1},
                         {"beta2", s.beta2},
                         {"eps", s.eps},
                         {"weight_decay", s.weight_decay}};
    add_slot(slots, s.name + ".m1", s.first_moment);
    add_slot(slots, s.name + ".m2", s.second_moment);
}

void collect_model(std::vector<TensorSlot>& slots, json& adam_meta, RecommenderModel& m) {
    for (std::size_t f = 0; f < m.tables.tables.size(); ++f) {
        add_slot(slots, m.tag + ".table." + std::to_string(f), m.tables.tables[f]);
        collect_adam(slots, adam_meta, m.table_opt[f]);
    }
    add_slot(slots, m.tag + ".w1", m.mlp.w1);
    add_slot(slots, m.tag + ".b1", m.mlp.b1);
    add_slot(slots, m.tag + ".w2", m.mlp.w2);
    add_slot(slots, m.tag + ".b2", m.mlp.b2);
    add_slot(slots, m.tag + ".w3", m.mlp.w3);
    add_slot(slots, m.tag + ".b3", m.mlp.b3);
    collect_adam(slots, adam_meta, m.w1_opt);
    collect_adam(slots, adam_meta, m.b1_opt);
    collect_adam(slots, adam_meta, m.w2_opt);
    collect_adam(slots, adam_meta, m.b2_opt);
    collect_adam(slots, adam_meta, m.w3_opt);
    collect_adam(slots, adam_meta, m.b3_opt);
}

// One traversal serves both directions: save reads through the slots, load
// writes through them after shapes are rebuilt from the header.
std::vector<TensorSlot> collect_slots(PipelineState& state, json& adam_meta) {
    std::vector<TensorSlot> slots;
    if (state.stage >= Stage::pretrained) collect_model(slots, adam_meta, state.base);
    if (state.stage >= Stage::searched) {
        add_slot(slots, "gates.projection", state.gates.projection);
        add_slot(slots, "gates.bias", state.gates.bias);
        collect_adam(slots, adam_meta, state.gates.proj_opt);
        collect_adam(slots, adam_meta, state.gates.bias_opt);
    }
    if (state.stage >= Stage::clustered)
        for (std::size_t c = 0; c < state.kmeans.centroids.size(); ++c)
            add_slot(slots, "kmeans.centroid." + std::to_string(c), state.kmeans.centroids[c]);
    for (std::size_t c = 0; c < state.cluster_specs.size(); ++c)
        add_slot(slots, "spec." + std::to_string(c) + ".mean_mask", state.cluster_specs[c].mean_mask);
    for (auto& m : state.cluster_models) collect_model(slots, adam_meta, m);
    return slots;
}

json schema_to_json(const DatasetSchema& schema) {
    json j;
    j["label"] = schema.label_column;
    j["fields"] = json::array();
    for (const auto& f : schema.fields) {
        json jf;
        jf["name"] = f.name;
        jf["kind"] = f.kind == FieldKind::categorical ? "categorical" : "numerical";
        jf["vocab_size"] = f.vocab_size;
        if (!f.bin_edges.empty()) jf["bin_edges"] = f.bin_edges;
        j["fields"].push_back(jf);
    }
    return j;
}

DatasetSchema schema_from_json(const json& j) {
    DatasetSchema schema;
    schema.label_column = j.at("label").get<std::string>();
    for (const auto& jf : j.at("fields")) {
        FieldSchema f;
        f.name = jf.at("name").get<std::string>();
        f.kind = jf.at("kind").get<std::string>() == "numerical" ? FieldKind::numerical
                                                                 : FieldKind::categorical;
        f.vocab_size = jf.at("vocab_size").get<std::size_t>();
        if (jf.contains("bin_edges")) f.bin_edges = jf.at("bin_edges").get<std::vector<double>>();
        schema.fields.push_back(std::move(f));
    }
    return schema;
}

void restore_adam(const json& adam_meta, AdamState& s) {
    const auto& j = adam_meta.at(s.name);
    s.step = j.at("step").get<std::uint64_t>();
    s.lr = j.at("lr").get<double>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.eps = j.at("eps").get<double>();
    s.weight_decay = j.at("weight_decay").get<double>();
}

std::vector<std::size_t> vocab_sizes_of(const DatasetSchema& schema) {
    std::vector<std::size_t> v;
    for (const auto& f : schema.fields) v.push_back(f.vocab_size);
    return v;
}

} // namespace

void save_checkpoint(const PipelineState& state, const std::string& path) {
    auto& mutable_state = const_cast<PipelineState&>(state); // slots only read here

    json adam_meta = json::object();
    auto slots = collect_slots(mutable_state, adam_meta);

    json header;
    header["format"] = "IHAS-CKPT-v1";
    header["stage"] = stage_name(state.stage);
    header["config"] = json::parse(config_to_json(state.config));
    header["schema"] = schema_to_json(state.schema);
    header["schema_fingerprint"] = state.schema_fingerprint;
    header["vocab"] = state.vocab.index_to_token;
    header["adam"] = adam_meta;
    header["metrics_log"] = state.metrics_log;

    if (state.stage >= Stage::clustered) {
        header["kmeans"] = {{"k", state.kmeans.k},
                            {"dim", state.kmeans.dim()},
                            {"counts", state.kmeans.counts}};
    }
    header["cluster_specs"] = json::array();
    for (const auto& spec : state.cluster_specs)
        header["cluster_specs"].push_back({{"dims_per_field", spec.dims_per_field}});
    header["cluster_models"] = json::array();
    for (const auto& m : state.cluster_models)
        header["cluster_models"].push_back({{"tag", m.tag}, {"dims", m.tables.dims}});

    header["tensors"] = json::array();
    for (const auto& s : slots)
        header["tensors"].push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});

    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, static_cast<std::streamsize>(std::strlen(kMagic)));
    const std::uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& s : slots) {
        out.write(reinterpret_cast<const char*>(s.data->data()),
                  static_cast<std::streamsize>(s.data->size() * sizeof(double)));
    }
    if (!out) throw IoError("failed while writing checkpoint: " + path);
}

PipelineState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);

    std::string magic(std::strlen(kMagic), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (!in || magic != kMagic) throw IoError("not an IHAS-CKPT-v1 checkpoint: " + path);

    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw IoError("truncated checkpoint header: " + path);

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw IoError("corrupt checkpoint header: " + std::string(e.what()));
    }

    PipelineState state;
    state.stage = stage_from_name(header.at("stage").get<std::string>());
    {
        std::map<std::string, std::string> kv;
        for (const auto& [key, value] : header.at("config").items()) kv[key] = value.dump();
        state.config = parse_config("", kv);
    }

    state.schema = schema_from_json(header.at("schema"));
    state.schema_fingerprint = header.at("schema_fingerprint").get<std::uint64_t>();
    state.vocab.index_to_token = header.at("vocab").get<std::vector<std::vector<std::string>>>();
    state.vocab.token_to_index.resize(state.vocab.index_to_token.size());
    for (std::size_t f = 0; f < state.vocab.index_to_token.size(); ++f)
        for (std::uint32_t i = 0; i < state.vocab.index_to_token[f].size(); ++i)
            state.vocab.token_to_index[f].emplace(state.vocab.index_to_token[f][i], i);
    state.metrics_log = header.at("metrics_log").get<std::vector<std::string>>();

    const auto& cfg = state.config;
    RngStream scratch_rng(0); // every value is overwritten from the blob

    if (state.stage >= Stage::pretrained) {
        std::vector<std::size_t> dims(state.schema.fields.size(), cfg.embedding_dim);
        state.base = make_recommender("base", vocab_sizes_of(state.schema), dims, cfg.mlp_hidden1,
                                      cfg.mlp_hidden2, cfg.lr, cfg.weight_decay, scratch_rng);
    }
    if (state.stage >= Stage::searched)
        state.gates = make_gates(state.schema.fields.size() * cfg.embedding_dim, cfg.lr,
                                 cfg.weight_decay, scratch_rng);
    if (state.stage >= Stage::clustered) {
        const auto& jk = header.at("kmeans");
        state.kmeans.k = jk.at("k").get<std::size_t>();
        state.kmeans.counts = jk.at("counts").get<std::vector<std::uint64_t>>();
        state.kmeans.centroids.assign(state.kmeans.k,
                                      std::vector<double>(jk.at("dim").get<std::size_t>(), 0.0));
    }
    for (const auto& js : header.at("cluster_specs")) {
        ClusterDimSpec spec;
        spec.dims_per_field = js.at("dims_per_field").get<std::vector<std::size_t>>();
        spec.mean_mask.assign(state.schema.fields.size() * cfg.embedding_dim, 0.0);
        state.cluster_specs.push_back(std::move(spec));
    }
    for (const auto& jm : header.at("cluster_models")) {
        state.cluster_models.push_back(make_recommender(
            jm.at("tag").get<std::string>(), vocab_sizes_of(state.schema),
            jm.at("dims").get<std::vector<std::size_t>>(), cfg.mlp_hidden1, cfg.mlp_hidden2,
            cfg.lr, cfg.weight_decay, scratch_rng));
    }

    json adam_meta_out = json::object();
    auto slots = collect_slots(state, adam_meta_out);

    const auto& tensor_meta = header.at("tensors");
    if (tensor_meta.size() != slots.size())
        throw IoError("checkpoint tensor manifest mismatch: expected " +
                      std::to_string(slots.size()) + " tensors, found " +
                      std::to_string(tensor_meta.size()));

    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& meta = tensor_meta[i];
        if (meta.at("name").get<std::string>() != slots[i].name ||
            meta.at("rows").get<std::size_t>() != slots[i].rows ||
            meta.at("cols").get<std::size_t>() != slots[i].cols)
            throw IoError("checkpoint tensor mismatch at '" + slots[i].name + "'");
        in.read(reinterpret_cast<char*>(slots[i].data->data()),
                static_cast<std::streamsize>(slots[i].data->size() * sizeof(double)));
        if (!in) throw IoError("truncated checkpoint blob at '" + slots[i].name + "'");
    }

    // Adam scalar state
    const auto& adam_meta = header.at("adam");
    auto restore_model = [&](RecommenderModel& m) {
        for (auto& opt : m.table_opt) restore_adam(adam_meta, opt);
        restore_adam(adam_meta, m.w1_opt);
        restore_adam(adam_meta, m.b1_opt);
        restore_adam(adam_meta, m.w2_opt);
        restore_adam(adam_meta, m.b2_opt);
        restore_adam(adam_meta, m.w3_opt);
        restore_adam(adam_meta, m.b3_opt);
    };
    if (state.stage >= Stage::pretrained) restore_model(state.base);
    if (state.stage >= Stage::searched) {
        restore_adam(adam_meta, state.gates.proj_opt);
        restore_adam(adam_meta, state.gates.bias_opt);
    }
    for (auto& m : state.cluster_models) restore_model(m);

    return state;
}

} // namespace ihas
