#include "providers/knowledge_base.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "protocol/error.hpp"

namespace bprun {

namespace {

constexpr std::size_t kExcerptChars = 400;

bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

std::map<std::string, int> term_counts(std::string_view text) {
    std::map<std::string, int> counts;
    for (auto& t : kb_tokenize(text)) ++counts[t];
    return counts;
}

// First `n` UTF-8 code points.
std::string utf8_prefix(const std::string& s, std::size_t n) {
    std::size_t i = 0;
    std::size_t chars = 0;
    while (i < s.size() && chars < n) {
        auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
        i = std::min(s.size(), i + len);
        ++chars;
    }
    return s.substr(0, i);
}

}  // namespace

nlohmann::json to_json(const KbHit& hit) {
    return {{"doc_id", hit.doc_id}, {"score", hit.score}, {"excerpt", hit.excerpt}};
}

std::vector<std::string> kb_tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (is_word_byte(c)) {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

KnowledgeBase::KnowledgeBase(std::string kb_id, std::vector<KbDocument> documents)
    : kb_id_(std::move(kb_id)), documents_(std::move(documents)) {
    const double n_docs = static_cast<double>(documents_.size());

    std::vector<std::map<std::string, int>> counts;
    counts.reserve(documents_.size());
    std::map<std::string, int> df;
    for (const auto& doc : documents_) {
        counts.push_back(term_counts(doc.body));
        for (const auto& [term, _] : counts.back()) ++df[term];
    }
    for (const auto& [term, d] : df) {
        idf_[term] = std::log((1.0 + n_docs) / (1.0 + d)) + 1.0;
    }

    norms_.assign(documents_.size(), 0.0);
    for (std::size_t i = 0; i < documents_.size(); ++i) {
        double sum_sq = 0.0;
        for (const auto& [term, tf] : counts[i]) {
            const double w = (1.0 + std::log(static_cast<double>(tf))) * idf_[term];
            postings_[term].push_back({i, w});
            sum_sq += w * w;
        }
        norms_[i] = std::sqrt(sum_sq);
    }
}

KnowledgeBase KnowledgeBase::ingest_directory(std::string kb_id, const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".txt" || ext == ".md")) files.push_back(entry.path());
    }
    if (ec) throw ValidationError("cannot read knowledge base directory " + dir + ": " + ec.message());
    std::sort(files.begin(), files.end());

    std::vector<KbDocument> docs;
    for (const auto& path : files) {
        std::ifstream in(path);
        std::stringstream ss;
        ss << in.rdbuf();
        KbDocument doc{path.stem().string(), {}, ss.str()};
        std::istringstream lines(doc.body);
        for (std::string line; std::getline(lines, line);) {
            auto start = line.find_first_not_of("# \t");
            if (start != std::string::npos) {
                doc.title = line.substr(start);
                break;
            }
        }
        docs.push_back(std::move(doc));
    }
    return KnowledgeBase(std::move(kb_id), std::move(docs));
}

std::vector<KbHit> KnowledgeBase::query(std::string_view text, int top_k) const {
    if (top_k < 1) throw ValidationError("top_k must be >= 1");

    std::map<std::string, double> q;
    double q_sum_sq = 0.0;
    for (const auto& [term, tf] : term_counts(text)) {
        auto it = idf_.find(term);
        if (it == idf_.end()) continue;  // out-of-vocabulary terms carry no weight
        const double w = (1.0 + std::log(static_cast<double>(tf))) * it->second;
        q[term] = w;
        q_sum_sq += w * w;
    }
    if (q.empty()) return {};
    const double q_norm = std::sqrt(q_sum_sq);

    std::vector<double> dots(documents_.size(), 0.0);
    for (const auto& [term, qw] : q) {
        for (const auto& p : postings_.at(term)) dots[p.doc] += qw * p.weight;
    }

    std::vector<KbHit> hits;
    for (std::size_t i = 0; i < documents_.size(); ++i) {
        if (dots[i] <= 0.0 || norms_[i] == 0.0) continue;
        hits.push_back({documents_[i].doc_id, dots[i] / (q_norm * norms_[i]),
                        utf8_prefix(documents_[i].body, kExcerptChars)});
    }
    std::sort(hits.begin(), hits.end(), [](const KbHit& a, const KbHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (hits.size() > static_cast<std::size_t>(top_k)) hits.resize(static_cast<std::size_t>(top_k));
    return hits;
}

void KbStore::add(std::shared_ptr<const KnowledgeBase> kb) {
    const auto id = kb->id();
    kbs_[id] = std::move(kb);
}

const KnowledgeBase& KbStore::get(const std::string& kb_id) const {
    auto it = kbs_.find(kb_id);
    if (it == kbs_.end()) throw EngineError(ErrorClass::validation, "not_found: knowledge base '" + kb_id + "'");
    return *it->second;
}

}  // namespace bprun
