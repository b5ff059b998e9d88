#include "dcin/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dcin/errors.hpp"

namespace dcin {

std::uint64_t param_digest(const ParameterStore& store) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
    auto mix = [&h](const void* p, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& p : store.all()) {
        mix(p.name.data(), p.name.size());
        mix(p.value.data.data(), p.value.data.size() * sizeof(double));
    }
    return h;
}

void save_checkpoint(const std::string& path, const Model& model, const std::string& config_json,
                     std::uint64_t rng_digest) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw ValidationError("save_checkpoint: cannot open " + path);
    const FeatureSchema& s = model.schema();
    const ModelDims& d = model.dims();
    const AblationFlags fl = model.flags();
    std::fprintf(f, "%s\n", kCheckpointSchema);
    std::fprintf(f, "kind %s\n", kind_name(model.kind()).c_str());
    std::fprintf(f, "flags use_position=%d use_fcfm=%d\n", fl.use_position ? 1 : 0,
                 fl.use_fcfm ? 1 : 0);
    std::fprintf(f, "schema %zu %zu %zu %zu %zu %zu\n", s.item_vocab, s.category_vocab,
                 s.user_vocab, s.embed_dim, s.max_abs_position, s.rel_range);
    std::fprintf(f, "dims %zu %zu %zu %zu", d.att_dim, d.fcfm_hidden, d.interest_dim,
                 d.head.size());
    for (std::size_t hsz : d.head) std::fprintf(f, " %zu", hsz);
    std::fprintf(f, "\n");
    std::fprintf(f, "config %s\n", config_json.c_str());
    std::fprintf(f, "rng_digest %016" PRIx64 "\n", rng_digest);
    const ParameterStore& store = model.store();
    std::fprintf(f, "tensors %zu\n", store.count());
    for (const auto& p : store.all()) {
        std::fprintf(f, "tensor %s %zu", p.name.c_str(), p.value.rank());
        for (std::size_t dim : p.value.shape) std::fprintf(f, " %zu", dim);
        std::fprintf(f, "\n");
        const std::size_t c = p.value.cols() == 0 ? 1 : p.value.cols();
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            std::fprintf(f, "%a%c", p.value.data[i], (i + 1) % c == 0 ? '\n' : ' ');
        }
    }
    std::fprintf(f, "digest %016" PRIx64 "\n", param_digest(store));
    std::fclose(f);
}

std::unique_ptr<Model> load_checkpoint(const std::string& path, std::string* config_json) {
    std::ifstream f(path);
    if (!f) throw ValidationError("load_checkpoint: cannot open " + path);
    std::string line, word;
    auto expect = [&](const std::string& key) -> std::istringstream {
        if (!std::getline(f, line))
            throw ParseError(path + ": truncated checkpoint, expected " + key);
        std::istringstream is(line);
        is >> word;
        if (word != key) throw ParseError(path + ": expected \"" + key + "\", got \"" + word + "\"");
        return is;
    };
    if (!std::getline(f, line) || line != kCheckpointSchema)
        throw ParseError(path + ": not a " + std::string(kCheckpointSchema) + " file");
    auto is_kind = expect("kind");
    std::string kind_str;
    is_kind >> kind_str;
    ModelKind kind = kind_from_name(kind_str);

    auto is_flags = expect("flags");
    AblationFlags flags;
    std::string tok;
    while (is_flags >> tok) {
        if (tok == "use_position=0") flags.use_position = false;
        if (tok == "use_fcfm=0") flags.use_fcfm = false;
    }
    auto is_schema = expect("schema");
    FeatureSchema schema;
    is_schema >> schema.item_vocab >> schema.category_vocab >> schema.user_vocab >>
        schema.embed_dim >> schema.max_abs_position >> schema.rel_range;
    auto is_dims = expect("dims");
    ModelDims dims;
    std::size_t nhead = 0;
    is_dims >> dims.att_dim >> dims.fcfm_hidden >> dims.interest_dim >> nhead;
    dims.head.clear();
    for (std::size_t i = 0; i < nhead; ++i) {
        std::size_t hsz;
        is_dims >> hsz;
        dims.head.push_back(hsz);
    }
    auto is_config = expect("config");
    std::string cfg;
    std::getline(is_config, cfg);
    if (!cfg.empty() && cfg.front() == ' ') cfg.erase(cfg.begin());
    if (config_json) *config_json = cfg;
    expect("rng_digest");

    auto model = make_model(kind, schema, dims, flags, /*seed=*/0);
    auto is_count = expect("tensors");
    std::size_t count = 0;
    is_count >> count;
    if (count != model->store().count())
        throw ParseError(path + ": tensor count " + std::to_string(count) +
                         " does not match model layout (" +
                         std::to_string(model->store().count()) + ")");
    for (std::size_t t = 0; t < count; ++t) {
        auto is_tensor = expect("tensor");
        std::string name;
        std::size_t rank = 0;
        is_tensor >> name >> rank;
        std::vector<std::size_t> shape(rank);
        for (std::size_t i = 0; i < rank; ++i) is_tensor >> shape[i];
        auto& p = model->store().named(name);
        if (p.value.shape != shape)
            throw ParseError(path + ": tensor " + name + " has unexpected shape");
        const std::size_t cols = p.value.cols() == 0 ? 1 : p.value.cols();
        const std::size_t rows = p.value.size() / cols;
        std::size_t idx = 0;
        for (std::size_t r = 0; r < rows; ++r) {
            if (!std::getline(f, line))
                throw ParseError(path + ": truncated tensor " + name);
            const char* cur = line.c_str();
            char* end = nullptr;
            for (std::size_t c = 0; c < cols; ++c) {
                const double v = std::strtod(cur, &end);
                if (end == cur) throw ParseError(path + ": bad value in tensor " + name);
                p.value.data[idx++] = v;
                cur = end;
            }
        }
    }
    auto is_digest = expect("digest");
    std::string digest_hex;
    is_digest >> digest_hex;
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, param_digest(model->store()));
    if (digest_hex != buf)
        throw ParseError(path + ": digest mismatch, checkpoint corrupt");
    return model;
}

}  // namespace dcin
