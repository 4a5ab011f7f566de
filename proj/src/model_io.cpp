#include "senti/model_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"

namespace senti {

using nlohmann::json;

namespace {

json cleaning_to_json(const CleaningConfig& c) {
    return {{"strip_urls", c.strip_urls}, {"strip_mentions", c.strip_mentions}, {"strip_hashtags", c.strip_hashtags}};
}

CleaningConfig cleaning_from_json(const json& j) {
    CleaningConfig c;
    c.strip_urls = j.value("strip_urls", true);
    c.strip_mentions = j.value("strip_mentions", true);
    c.strip_hashtags = j.value("strip_hashtags", true);
    return c;
}

template <class Mat>
void write_tensor(std::ostream& out, const Mat& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c) detail::write_f32(out, t(r, c));
}

template <class Mat>
void read_tensor(std::istream& in, Mat&& t, const std::string& where) {
    for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c) {
            double v;
            if (!detail::read_f32(in, v)) throw DataError(where + ": truncated tensor data");
            t(r, c) = v;
        }
}

json read_header(std::istream& in, const std::string& where) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kModelMagic, 4) != 0)
        throw DataError(where + ": bad magic, not an SSM1 model file");
    std::uint32_t len = 0;
    if (!detail::read_u32(in, len)) throw DataError(where + ": truncated model header");
    std::string text(len, '\0');
    if (!in.read(text.data(), len)) throw DataError(where + ": truncated model header");
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        throw DataError(where + ": malformed model header JSON");
    }
}

}  // namespace

json metrics_to_json(const Metrics& m) {
    json j;
    j["loss"] = m.loss;
    j["mae"] = m.mae;
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["tp"] = m.tp;
    j["fp"] = m.fp;
    j["fn"] = m.fn;
    j["tn"] = m.tn;
    if (m.precision_undefined) j["precision_undefined"] = true;
    if (m.recall_undefined) j["recall_undefined"] = true;
    return j;
}

void save_model(const std::filesystem::path& path, const Model& model, const std::optional<Metrics>& metrics) {
    model.check_consistency();
    json header;
    header["version"] = model.version;
    header["h"] = model.params.hidden();
    header["d"] = model.params.input_dim();
    header["max_len"] = model.max_len;
    header["threshold"] = model.threshold;
    header["vocab_hash"] = hash_hex(model.vocab.hash());
    header["metrics"] = metrics ? metrics_to_json(*metrics) : json(nullptr);
    header["vocab"] = {{"min_count", model.vocab.min_count()}, {"tokens", model.vocab.tokens()}};
    header["cleaning"] = cleaning_to_json(model.cleaning);
    header["stop_chars"] = stop_set_to_string(model.stop_chars);
    json tensors = json::array();
    model.params.for_each_tensor([&](std::string_view name, const auto& t) {
        tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    });
    tensors.push_back({{"name", "embeddings"}, {"rows", model.embeddings.rows()}, {"cols", model.embeddings.dim()}});
    header["tensors"] = tensors;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    const std::string text = header.dump();
    out.write(kModelMagic, 4);
    detail::write_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    model.params.for_each_tensor([&](std::string_view, const auto& t) { write_tensor(out, t); });
    write_tensor(out, model.embeddings.vectors);
    if (!out) throw DataError("failed writing model file: " + path.string());
}

json read_model_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    return read_header(in, path.string());
}

Model load_model(const std::filesystem::path& path) {
    const std::string where = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + where);
    const json header = read_header(in, where);
    Model model;
    try {
        const int version = header.at("version").get<int>();
        if (version != kModelVersion) throw DataError(where + ": unsupported model version " + std::to_string(version));
        const auto h = header.at("h").get<Eigen::Index>();
        const auto d = header.at("d").get<Eigen::Index>();
        if (h < 1 || d < 1) throw DataError(where + ": invalid model dimensions");
        model.version = version;
        model.max_len = header.at("max_len").get<std::size_t>();
        model.threshold = header.at("threshold").get<double>();
        const auto& v = header.at("vocab");
        model.vocab = Vocabulary(v.at("tokens").get<std::vector<std::string>>(), v.at("min_count").get<int>());
        if (parse_hash_hex(header.at("vocab_hash").get<std::string>()) != model.vocab.hash())
            throw DataError(where + ": vocab_hash does not match the stored vocabulary");
        if (header.contains("cleaning")) model.cleaning = cleaning_from_json(header["cleaning"]);
        model.stop_chars = stop_set_from_string(header.value("stop_chars", std::string()));

        model.params = LstmParams<double>::zeros(h, d);
        const auto rows = static_cast<Eigen::Index>(model.vocab.size());
        model.embeddings.vocab_hash = model.vocab.hash();
        model.embeddings.vectors = RowMatrix::Zero(rows, d);
        model.embeddings.context_vectors = RowMatrix::Zero(rows, d);

        const auto& tensors = header.at("tensors");
        std::size_t k = 0;
        auto expect = [&](std::string_view name, Eigen::Index r, Eigen::Index c) {
            if (k >= tensors.size()) throw DataError(where + ": tensor table is too short");
            const auto& t = tensors[k++];
            if (t.at("name").get<std::string>() != name || t.at("rows").get<Eigen::Index>() != r ||
                t.at("cols").get<Eigen::Index>() != c)
                throw DataError(where + ": unexpected tensor entry for " + std::string(name));
        };
        model.params.for_each_tensor([&](std::string_view name, auto t) {
            expect(name, t.rows(), t.cols());
            read_tensor(in, t, where);
        });
        expect("embeddings", rows, d);
        read_tensor(in, model.embeddings.vectors, where);
    } catch (const json::exception& e) {
        throw DataError(where + ": malformed model header: " + e.what());
    }
    if (!model.params.all_finite() || !model.embeddings.vectors.allFinite())
        throw DataError(where + ": model contains non-finite values");
    model.check_consistency();
    return model;
}

json history_to_json(const TrainHistory& history) {
    json arr = json::array();
    for (const auto& e : history.epochs)
        arr.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"train_acc", e.train_acc},
                       {"val_loss", e.val_loss},
                       {"val_acc", e.val_acc}});
    return arr;
}

void save_history(const std::filesystem::path& path, const TrainHistory& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << history_to_json(history).dump(2) << '\n';
}

}  // namespace senti
