#include "aada/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "aada/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace aada {

namespace {

constexpr char kMagic[8] = {'A', 'A', 'D', 'A', 'C', 'K', 'P', 'T'};

json stats_to_json(const NormalizationStats& st) {
    return json{{"mean", st.mean}, {"stddev", st.stddev}, {"height_channel", st.height_channel}};
}

NormalizationStats stats_from_json(const json& j) {
    NormalizationStats st;
    st.mean = j.at("mean").get<std::vector<double>>();
    st.stddev = j.at("stddev").get<std::vector<double>>();
    st.height_channel = j.at("height_channel").get<int>();
    return st;
}

struct TensorRef {
    std::string name;
    std::vector<int> shape;
    const double* data;
};

void collect_net_tensors(nn::ParamSet& ps, std::vector<TensorRef>& out) {
    for (auto& [name, v] : ps.params) out.push_back({name, v->value.shape(), v->value.data()});
    for (auto& [name, t] : ps.buffers) out.push_back({name, t->shape(), t->data()});
}

void collect_opt_tensors(const std::string& prefix, const std::vector<Tensor>& slots,
                         std::vector<TensorRef>& out) {
    for (size_t i = 0; i < slots.size(); ++i)
        out.push_back({prefix + std::to_string(i), slots[i].shape(), slots[i].data()});
}

}  // namespace

void save_checkpoint(const std::string& path, ModelBundle& bundle, const CheckpointMeta& meta,
                     const OptimizerStates& opt) {
    std::vector<TensorRef> tensors;
    nn::ParamSet psc, psa, psd;
    if (bundle.classifier) {
        bundle.classifier->collect(psc);
        collect_net_tensors(psc, tensors);
    }
    if (bundle.adapter) {
        bundle.adapter->collect(psa);
        collect_net_tensors(psa, tensors);
    }
    if (bundle.discriminator) {
        bundle.discriminator->collect(psd);
        collect_net_tensors(psd, tensors);
    }

    json header;
    header["format"] = meta.format;
    header["epoch"] = meta.epoch;
    header["class_count"] = meta.class_count;
    header["working_gsd"] = meta.working_gsd;
    header["source_stats"] = stats_to_json(meta.source_stats);
    if (meta.target_stats) header["target_stats"] = stats_to_json(*meta.target_stats);
    if (bundle.classifier) {
        const auto& s = meta.classifier_spec;
        header["classifier_spec"] = {{"input_channels", s.input_channels},
                                     {"class_count", s.class_count},
                                     {"width_multiplier", s.width_multiplier},
                                     {"mid_blocks", s.mid_blocks},
                                     {"pretrained_backbone", s.pretrained_backbone}};
    }
    if (bundle.adapter && meta.adapter_spec) {
        const auto& s = *meta.adapter_spec;
        header["adapter_spec"] = {{"input_channels", s.input_channels},
                                  {"residual_blocks", s.residual_blocks},
                                  {"base_width", s.base_width}};
    }
    if (bundle.discriminator && meta.discriminator_spec) {
        const auto& s = *meta.discriminator_spec;
        header["discriminator_spec"] = {{"input_channels", s.input_channels},
                                        {"width", s.width}};
    }
    if (opt.sgd_c) {
        header["opt_sgd_c"] = {{"lr", opt.sgd_c->lr},
                               {"momentum", opt.sgd_c->momentum},
                               {"weight_decay", opt.sgd_c->weight_decay},
                               {"slots", opt.sgd_c->velocity.size()}};
        collect_opt_tensors("opt.sgd_c.vel.", opt.sgd_c->velocity, tensors);
    }
    auto adam_header = [&](const char* key, const char* prefix, Adam* a) {
        if (!a) return;
        header[key] = {{"lr", a->lr}, {"beta1", a->beta1}, {"beta2", a->beta2},
                       {"eps", a->eps}, {"t", a->t}, {"slots", a->m.size()}};
        collect_opt_tensors(std::string(prefix) + ".m.", a->m, tensors);
        collect_opt_tensors(std::string(prefix) + ".v.", a->v, tensors);
    };
    adam_header("opt_adam_a", "opt.adam_a", opt.adam_a);
    adam_header("opt_adam_d", "opt.adam_d", opt.adam_d);

    json dir = json::array();
    uint64_t offset = 0;
    for (const auto& t : tensors) {
        const auto bytes = static_cast<uint64_t>(Tensor::count(t.shape)) * sizeof(double);
        dir.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
        offset += bytes;
    }
    header["tensors"] = dir;
    const std::string header_str = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("checkpoint: cannot write " + tmp);
        out.write(kMagic, 8);
        const auto hlen = static_cast<uint64_t>(header_str.size());
        out.write(reinterpret_cast<const char*>(&hlen), 8);
        out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        for (const auto& t : tensors)
            out.write(reinterpret_cast<const char*>(t.data),
                      static_cast<std::streamsize>(Tensor::count(t.shape) * sizeof(double)));
        if (!out) throw DataError("checkpoint: write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

int load_backbone_weights(nets::Classifier& classifier, const std::string& path) {
    LoadedCheckpoint donor = load_checkpoint(path);
    if (!donor.bundle.classifier) throw DataError("backbone: checkpoint carries no classifier");

    nn::ParamSet dst, src;
    classifier.collect(dst);
    donor.bundle.classifier->collect(src);
    // encoder tensors only; the decoder stays randomly initialized
    static const char* kEncoderParts[] = {".stem_", ".down", ".mid", ".exit"};

    int adopted = 0;
    for (auto& [name, v] : dst.params) {
        bool encoder = false;
        for (const char* part : kEncoderParts)
            if (name.find(part) != std::string::npos) encoder = true;
        if (!encoder) continue;
        for (auto& [sname, sv] : src.params) {
            if (sname != name || sv->value.shape() != v->value.shape()) continue;
            v->value = sv->value;
            ++adopted;
            break;
        }
    }
    for (auto& [name, t] : dst.buffers) {
        bool encoder = false;
        for (const char* part : kEncoderParts)
            if (name.find(part) != std::string::npos) encoder = true;
        if (!encoder) continue;
        for (auto& [sname, st] : src.buffers) {
            if (sname != name || st->shape() != t->shape()) continue;
            *t = *st;
            ++adopted;
            break;
        }
    }
    return adopted;
}

LoadedCheckpoint load_checkpoint(const std::string& path, const OptimizerStates& opt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot read " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string header_str(hlen, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw DataError("checkpoint: truncated header in " + path);
    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception& e) {
        throw DataError("checkpoint: bad header: " + std::string(e.what()));
    }
    if (header.at("format").get<int>() != 1)
        throw DataError("checkpoint: unsupported format version");

    LoadedCheckpoint out;
    out.meta.format = 1;
    out.meta.epoch = header.at("epoch").get<int>();
    out.meta.class_count = header.value("class_count", 0);
    out.meta.working_gsd = header.value("working_gsd", 0.0);
    out.meta.source_stats = stats_from_json(header.at("source_stats"));
    if (header.contains("target_stats"))
        out.meta.target_stats = stats_from_json(header.at("target_stats"));
    out.bundle.epoch = out.meta.epoch;

    RngStream dummy(0);  // values are overwritten below
    if (header.contains("classifier_spec")) {
        const auto& j = header["classifier_spec"];
        ClassifierSpec s;
        s.input_channels = j.at("input_channels").get<int>();
        s.class_count = j.at("class_count").get<int>();
        s.width_multiplier = j.at("width_multiplier").get<double>();
        s.mid_blocks = j.at("mid_blocks").get<int>();
        s.pretrained_backbone = j.at("pretrained_backbone").get<bool>();
        out.meta.classifier_spec = s;
        out.bundle.classifier = std::make_unique<nets::Classifier>(s, dummy);
    }
    if (header.contains("adapter_spec")) {
        const auto& j = header["adapter_spec"];
        AdapterSpec s;
        s.input_channels = j.at("input_channels").get<int>();
        s.residual_blocks = j.at("residual_blocks").get<int>();
        s.base_width = j.at("base_width").get<int>();
        out.meta.adapter_spec = s;
        out.bundle.adapter = std::make_unique<nets::Adapter>(s, dummy);
    }
    if (header.contains("discriminator_spec")) {
        const auto& j = header["discriminator_spec"];
        DiscriminatorSpec s;
        s.input_channels = j.at("input_channels").get<int>();
        s.width = j.at("width").get<int>();
        out.meta.discriminator_spec = s;
        out.bundle.discriminator = std::make_unique<nets::Discriminator>(s, dummy);
    }

    // name -> destination
    std::vector<std::pair<std::string, Tensor*>> dst;
    nn::ParamSet psc, psa, psd;
    auto add_net = [&dst](nn::ParamSet& ps) {
        for (auto& [name, v] : ps.params) dst.emplace_back(name, &v->value);
        for (auto& [name, t] : ps.buffers) dst.emplace_back(name, t);
    };
    if (out.bundle.classifier) {
        out.bundle.classifier->collect(psc);
        add_net(psc);
    }
    if (out.bundle.adapter) {
        out.bundle.adapter->collect(psa);
        add_net(psa);
    }
    if (out.bundle.discriminator) {
        out.bundle.discriminator->collect(psd);
        add_net(psd);
    }

    auto restore_opt_slots = [&](const char* key, const char* prefix,
                                 std::vector<Tensor>* m_slots, std::vector<Tensor>* v_slots,
                                 auto&& apply_header) {
        if (!header.contains(key)) return;
        const auto& j = header[key];
        const auto slots = j.at("slots").get<size_t>();
        apply_header(j);
        if (m_slots) {
            m_slots->assign(slots, Tensor());
            for (size_t i = 0; i < slots; ++i)
                dst.emplace_back(std::string(prefix) + ".m." + std::to_string(i),
                                 &(*m_slots)[i]);
        }
        if (v_slots) {
            v_slots->assign(slots, Tensor());
            for (size_t i = 0; i < slots; ++i)
                dst.emplace_back(std::string(prefix) + ".v." + std::to_string(i),
                                 &(*v_slots)[i]);
        }
    };
    if (opt.sgd_c && header.contains("opt_sgd_c")) {
        const auto& j = header["opt_sgd_c"];
        opt.sgd_c->lr = j.at("lr").get<double>();
        opt.sgd_c->momentum = j.at("momentum").get<double>();
        opt.sgd_c->weight_decay = j.at("weight_decay").get<double>();
        const auto slots = j.at("slots").get<size_t>();
        opt.sgd_c->velocity.assign(slots, Tensor());
        for (size_t i = 0; i < slots; ++i)
            dst.emplace_back("opt.sgd_c.vel." + std::to_string(i), &opt.sgd_c->velocity[i]);
    }
    if (opt.adam_a)
        restore_opt_slots("opt_adam_a", "opt.adam_a", &opt.adam_a->m, &opt.adam_a->v,
                          [&](const json& j) {
                              opt.adam_a->lr = j.at("lr").get<double>();
                              opt.adam_a->beta1 = j.at("beta1").get<double>();
                              opt.adam_a->beta2 = j.at("beta2").get<double>();
                              opt.adam_a->eps = j.at("eps").get<double>();
                              opt.adam_a->t = j.at("t").get<int64_t>();
                          });
    if (opt.adam_d)
        restore_opt_slots("opt_adam_d", "opt.adam_d", &opt.adam_d->m, &opt.adam_d->v,
                          [&](const json& j) {
                              opt.adam_d->lr = j.at("lr").get<double>();
                              opt.adam_d->beta1 = j.at("beta1").get<double>();
                              opt.adam_d->beta2 = j.at("beta2").get<double>();
                              opt.adam_d->eps = j.at("eps").get<double>();
                              opt.adam_d->t = j.at("t").get<int64_t>();
                          });

    const size_t base = 16 + hlen;
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<int>>();
        const auto offset = entry.at("offset").get<uint64_t>();
        Tensor* target = nullptr;
        for (auto& [n, t] : dst)
            if (n == name) {
                target = t;
                break;
            }
        if (!target) continue;  // tensors for optimizers the caller did not request
        if (target->shape().empty() || target->shape() != shape) *target = Tensor(shape);
        in.seekg(static_cast<std::streamoff>(base + offset));
        in.read(reinterpret_cast<char*>(target->data()),
                static_cast<std::streamsize>(target->size() * sizeof(double)));
        if (!in) throw DataError("checkpoint: truncated tensor " + name);
    }
    return out;
}

}  // namespace aada
