#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace bprun {

struct KbDocument {
    std::string doc_id;
    std::string title;
    std::string body;
};

struct KbHit {
    std::string doc_id;
    double score = 0.0;
    std::string excerpt;
};

nlohmann::json to_json(const KbHit& hit);

// Lowercased alphanumeric runs; bytes >= 0x80 are kept as word characters.
std::vector<std::string> kb_tokenize(std::string_view text);

// Lexical retrieval index. TF is log-scaled (1 + ln tf), IDF is smoothed
// (ln((1 + N) / (1 + df)) + 1), ranking is cosine similarity. Immutable after
// construction, so one instance can be shared across executions.
class KnowledgeBase {
public:
    KnowledgeBase(std::string kb_id, std::vector<KbDocument> documents);

    // Reads every *.txt / *.md file in `dir` (sorted by name). The doc id is
    // the file stem; the title is the first non-empty line.
    static KnowledgeBase ingest_directory(std::string kb_id, const std::string& dir);

    // Zero-score documents are dropped. Ties break on doc_id ascending.
    // Throws ValidationError when top_k < 1.
    std::vector<KbHit> query(std::string_view text, int top_k) const;

    const std::string& id() const { return kb_id_; }
    const std::vector<KbDocument>& documents() const { return documents_; }

private:
    struct Posting {
        std::size_t doc = 0;
        double weight = 0.0;
    };

    std::string kb_id_;
    std::vector<KbDocument> documents_;
    std::map<std::string, std::vector<Posting>> postings_;
    std::map<std::string, double> idf_;
    std::vector<double> norms_;  // euclidean norm of each document vector
};

// Read-only catalog of knowledge bases keyed by id.
class KbStore {
public:
    void add(std::shared_ptr<const KnowledgeBase> kb);
    // Throws EngineError(validation, "not_found: ...") for unknown ids.
    const KnowledgeBase& get(const std::string& kb_id) const;
    bool contains(const std::string& kb_id) const { return kbs_.count(kb_id) != 0; }

private:
    std::map<std::string, std::shared_ptr<const KnowledgeBase>> kbs_;
};

}  // namespace bprun
