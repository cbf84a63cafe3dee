#pragma once

// Exploration knowledge, persisted as one JSON object per line:
//
//   {"id": "k-...", "app": "Tasks", "text": "...", "tags": ["priority"],
//    "source": {"episode": "Tasks-1", "first_step": 0, "last_step": 4},
//    "created_at": 1718000000123}
//
// Retrieval is lexical: 2 points when the item's app is named in the
// instruction (or is its app hint), plus one per shared word stem.

#include <mobileuse/types.hpp>

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mobileuse {

struct KnowledgeSource {
    std::string episode;
    int first_step = 0;
    int last_step = 0;
    bool operator==(const KnowledgeSource&) const = default;
};

struct KnowledgeItem {
    std::string id;  // assigned by the store when empty
    std::string app;
    std::string text;
    std::vector<std::string> tags;
    KnowledgeSource source;
    std::int64_t created_at = 0;  // milliseconds since epoch

    bool operator==(const KnowledgeItem&) const = default;
};

// Lowercased, stop-word-free word stems.
std::set<std::string> word_stems(std::string_view text);

class KnowledgeStore {
public:
    using Clock = std::function<std::int64_t()>;

    // In-memory store.
    KnowledgeStore();
    // File-backed store; loads existing records. Throws Error{storage_failure}.
    explicit KnowledgeStore(std::string path, Clock clock = {});

    // Returns the new id, or the existing id for a duplicate (app, text).
    // Throws Error{invalid_argument} for empty text/app, storage_failure on I/O.
    std::string add(KnowledgeItem item);

    std::optional<KnowledgeItem> get(const std::string& id) const;
    std::vector<KnowledgeItem> all() const;
    std::size_t size() const;

    std::vector<KnowledgeItem> retrieve(const Instruction& instruction, std::size_t limit) const;

    static int score(const Instruction& instruction, const KnowledgeItem& item);
    static std::string make_id(std::string_view app, std::string_view text);

    static std::vector<KnowledgeItem> load_file(const std::string& path);

private:
    std::optional<std::string> path_;
    Clock clock_;
    mutable std::mutex mutex_;
    std::vector<KnowledgeItem> items_;
};

}  // namespace mobileuse
