#include <mobileuse/error.hpp>
#include <mobileuse/knowledge_store.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace mobileuse {

namespace {

const std::set<std::string>& stop_words() {
    static const std::set<std::string> words{
        "a",    "an",   "and",  "are",   "as",   "at",    "be",   "by",   "can",  "do",   "for",
        "from", "has",  "have", "how",   "i",    "if",    "in",   "into", "is",   "it",   "its",
        "me",   "my",   "of",   "on",    "or",   "so",    "that", "the",  "then", "there", "this",
        "to",   "up",   "was",  "what",  "when", "where", "which", "will", "with", "you",  "your",
    };
    return words;
}

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string stem(std::string w) {
    if (w.size() > 4 && ends_with(w, "ies")) return w.substr(0, w.size() - 3) + "y";
    if (w.size() > 5 && ends_with(w, "ing")) return w.substr(0, w.size() - 3);
    if (w.size() > 4 && ends_with(w, "ed")) return w.substr(0, w.size() - 2);
    if (w.size() > 4 && (ends_with(w, "ches") || ends_with(w, "shes") || ends_with(w, "sses") ||
                         ends_with(w, "xes") || ends_with(w, "zes"))) {
        return w.substr(0, w.size() - 2);
    }
    if (w.size() > 3 && ends_with(w, "s") && !ends_with(w, "ss")) return w.substr(0, w.size() - 1);
    return w;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool mentions_app(const std::string& text_lower, const std::string& app_lower) {
    if (app_lower.empty()) return false;
    std::size_t pos = 0;
    while ((pos = text_lower.find(app_lower, pos)) != std::string::npos) {
        const bool left = pos == 0 || !is_word_char(text_lower[pos - 1]);
        const auto end = pos + app_lower.size();
        const bool right = end == text_lower.size() || !is_word_char(text_lower[end]);
        if (left && right) return true;
        ++pos;
    }
    return false;
}

nlohmann::json to_json(const KnowledgeItem& item) {
    return {{"id", item.id},
            {"app", item.app},
            {"text", item.text},
            {"tags", item.tags},
            {"source",
             {{"episode", item.source.episode},
              {"first_step", item.source.first_step},
              {"last_step", item.source.last_step}}},
            {"created_at", item.created_at}};
}

KnowledgeItem from_json(const nlohmann::json& j) {
    KnowledgeItem item;
    item.id = j.at("id").get<std::string>();
    item.app = j.at("app").get<std::string>();
    item.text = j.at("text").get<std::string>();
    item.tags = j.value("tags", std::vector<std::string>{});
    if (j.contains("source")) {
        const auto& s = j.at("source");
        item.source.episode = s.value("episode", "");
        item.source.first_step = s.value("first_step", 0);
        item.source.last_step = s.value("last_step", 0);
    }
    item.created_at = j.value("created_at", std::int64_t{0});
    if (item.app.empty() || item.text.empty()) throw Error(Errc::schema_error, "record with empty app or text");
    return item;
}

std::int64_t wall_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace

std::set<std::string> word_stems(std::string_view text) {
    std::set<std::string> out;
    std::string word;
    auto flush = [&] {
        if (!word.empty() && !stop_words().count(word)) out.insert(stem(word));
        word.clear();
    };
    for (char c : text) {
        if (is_word_char(c)) {
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

KnowledgeStore::KnowledgeStore() : clock_(wall_clock_ms) {}

KnowledgeStore::KnowledgeStore(std::string path, Clock clock)
    : path_(std::move(path)), clock_(clock ? std::move(clock) : Clock(wall_clock_ms)) {
    if (std::filesystem::exists(*path_)) {
        for (auto& item : load_file(*path_)) {
            const bool dup = std::any_of(items_.begin(), items_.end(), [&](const KnowledgeItem& k) {
                return k.id == item.id;
            });
            if (!dup) items_.push_back(std::move(item));
        }
    }
}

std::string KnowledgeStore::make_id(std::string_view app, std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    mix(app);
    mix("\n");
    mix(text);
    char buf[24];
    std::snprintf(buf, sizeof buf, "k-%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string KnowledgeStore::add(KnowledgeItem item) {
    if (item.app.empty()) throw Error(Errc::invalid_argument, "knowledge item needs an app");
    if (item.text.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw Error(Errc::invalid_argument, "knowledge item needs text");
    }
    std::lock_guard lock(mutex_);
    for (const auto& k : items_) {
        if (k.app == item.app && k.text == item.text) return k.id;
    }
    item.id = make_id(item.app, item.text);
    if (item.created_at == 0) item.created_at = clock_();
    if (path_) {
        std::ofstream out(*path_, std::ios::app | std::ios::binary);
        if (!out) throw Error(Errc::storage_failure, "cannot open " + *path_);
        out << to_json(item).dump() << '\n';
        out.flush();
        if (!out) throw Error(Errc::storage_failure, "write failed: " + *path_);
    }
    items_.push_back(item);
    return item.id;
}

std::optional<KnowledgeItem> KnowledgeStore::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    for (const auto& k : items_) {
        if (k.id == id) return k;
    }
    return std::nullopt;
}

std::vector<KnowledgeItem> KnowledgeStore::all() const {
    std::lock_guard lock(mutex_);
    return items_;
}

std::size_t KnowledgeStore::size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
}

int KnowledgeStore::score(const Instruction& instruction, const KnowledgeItem& item) {
    const auto app = lower(item.app);
    const bool app_hit = mentions_app(lower(instruction.text), app) ||
                         (instruction.app_hint && lower(*instruction.app_hint) == app);
    const auto query = word_stems(instruction.text);
    std::string doc = item.text;
    for (const auto& tag : item.tags) doc += " " + tag;
    int shared = 0;
    for (const auto& s : word_stems(doc)) shared += static_cast<int>(query.count(s));
    return (app_hit ? 2 : 0) + shared;
}

std::vector<KnowledgeItem> KnowledgeStore::retrieve(const Instruction& instruction, std::size_t limit) const {
    struct Ranked {
        int score;
        std::size_t index;
    };
    std::lock_guard lock(mutex_);
    std::vector<Ranked> ranked;
    for (std::size_t i = 0; i < items_.size(); ++i) {
        const int s = score(instruction, items_[i]);
        if (s > 0) ranked.push_back({s, i});
    }
    std::sort(ranked.begin(), ranked.end(), [&](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        if (items_[a.index].created_at != items_[b.index].created_at) {
            return items_[a.index].created_at > items_[b.index].created_at;
        }
        return a.index > b.index;
    });
    std::vector<KnowledgeItem> out;
    for (std::size_t i = 0; i < ranked.size() && i < limit; ++i) out.push_back(items_[ranked[i].index]);
    return out;
}

std::vector<KnowledgeItem> KnowledgeStore::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::storage_failure, "cannot read " + path);
    std::vector<KnowledgeItem> items;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            items.push_back(from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw Error(Errc::storage_failure, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return items;
}

}  // namespace mobileuse
