#include <mobileuse/error.hpp>
#include <mobileuse/knowledge_store.hpp>

#include <gtest/gtest.h>

#include <fstream>

#include "support/fixtures.hpp"

using namespace mobileuse;

namespace {

KnowledgeItem item(std::string app, std::string text, std::vector<std::string> tags = {}) {
    KnowledgeItem k;
    k.app = std::move(app);
    k.text = std::move(text);
    k.tags = std::move(tags);
    k.source = {"x-1", 0, 4};
    return k;
}

std::int64_t tick = 1000;
KnowledgeStore::Clock ticking() {
    return [] { return tick++; };
}

}  // namespace

TEST(WordStems, StopWordsAndSuffixes) {
    EXPECT_EQ(word_stems("Mark the HIGH priority tasks in Tasks"),
              (std::set<std::string>{"mark", "high", "priority", "task"}));
    EXPECT_EQ(word_stems("flags, colors; boxes & parties"), (std::set<std::string>{"flag", "color", "box", "party"}));
    EXPECT_EQ(word_stems("pressing opened glass"), (std::set<std::string>{"press", "open", "glass"}));
    EXPECT_TRUE(word_stems("the a of in").empty());
}

TEST(KnowledgeStore, AddIsIdempotentOnAppAndText) {
    KnowledgeStore store;
    const auto id = store.add(item("Tasks", "Tap the flag to set priority."));
    EXPECT_EQ(id.rfind("k-", 0), 0u);
    EXPECT_EQ(id.size(), 18u);
    EXPECT_EQ(store.add(item("Tasks", "Tap the flag to set priority.", {"other"})), id);
    EXPECT_EQ(store.size(), 1u);
    EXPECT_NE(store.add(item("Notes", "Tap the flag to set priority.")), id);
    ASSERT_TRUE(store.get(id));
    EXPECT_EQ(store.get(id)->app, "Tasks");
    EXPECT_FALSE(store.get("k-nope"));
}

TEST(KnowledgeStore, RejectsEmptyFields) {
    KnowledgeStore store;
    EXPECT_THROW(store.add(item("Tasks", "")), Error);
    EXPECT_THROW(store.add(item("", "text")), Error);
    EXPECT_THROW(store.add(item("Tasks", "   ")), Error);
}

// Instruction stems {mark, high, priority, task}; "Tasks" names the app.
//   Tasks item stems {mark, task, high, priority, tapp, flag, color, show}
//     -> 4 shared + 2 for the app = 6
//   Camera item stems {tap, shutter, take, high, resolution, photo}
//     -> 1 shared ("high") = 1
//   Clock item shares nothing -> 0, dropped.
TEST(KnowledgeStore, RankingByHandComputedScores) {
    KnowledgeStore store;
    const auto camera = store.add(item("Camera", "Tap the shutter to take a high resolution photo."));
    const auto clock = store.add(item("Clock", "Alarms repeat on the selected weekdays."));
    const auto tasks = store.add(item("Tasks", "Mark a task as high priority by tapping the flag; flag colors show priority."));
    (void)clock;

    const auto instr = Instruction::make("mark the high priority task in Tasks");
    EXPECT_EQ(KnowledgeStore::score(instr, *store.get(tasks)), 6);
    EXPECT_EQ(KnowledgeStore::score(instr, *store.get(camera)), 1);

    const auto got = store.retrieve(instr, 5);
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].id, tasks);
    EXPECT_EQ(got[1].id, camera);
    EXPECT_EQ(store.retrieve(instr, 1).size(), 1u);
    EXPECT_TRUE(store.retrieve(instr, 0).empty());
    EXPECT_TRUE(KnowledgeStore().retrieve(instr, 5).empty());
}

TEST(KnowledgeStore, AppHintAndTagsScore) {
    const auto k = item("Tasks", "Swipe left to archive.", {"archive"});
    EXPECT_EQ(KnowledgeStore::score(Instruction::make("archive the note", std::string("tasks")), k), 3);
    // "Task" inside another word is not a mention of the app.
    EXPECT_EQ(KnowledgeStore::score(Instruction::make("open Taskship"), k), 0);
}

TEST(KnowledgeStore, TiesBreakByRecency) {
    KnowledgeStore store;
    const auto older = store.add(item("Notes", "Pin a note to keep it on top."));
    const auto newer = store.add(item("Notes", "Pinned notes show a pin icon."));
    const auto got = store.retrieve(Instruction::make("pin something in Notes"), 5);
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].id, newer);
    EXPECT_EQ(got[1].id, older);
}

TEST(KnowledgeStore, PersistLoadRoundTrip) {
    const auto dir = fixtures::temp_dir("knowledge");
    const auto path = (dir / "k.jsonl").string();
    std::vector<KnowledgeItem> written;
    {
        KnowledgeStore store(path, ticking());
        store.add(item("Tasks", "Long-press a task to select several.", {"selection"}));
        store.add(item("Clock", "The stopwatch keeps running in the background."));
        store.add(item("Clock", "The stopwatch keeps running in the background."));
        written = store.all();
    }
    ASSERT_EQ(written.size(), 2u);
    EXPECT_EQ(KnowledgeStore::load_file(path), written);
    KnowledgeStore reopened(path, ticking());
    EXPECT_EQ(reopened.all(), written);
    reopened.add(item("Files", "Starred files appear under Favourites."));
    EXPECT_EQ(KnowledgeStore(path).size(), 3u);
}

TEST(KnowledgeStore, CorruptFileNamesTheLine) {
    const auto dir = fixtures::temp_dir("knowledge-bad");
    const auto path = (dir / "k.jsonl").string();
    std::ofstream(path) << R"({"id": "k-1", "app": "A", "text": "t", "tags": [], "source": {"episode": "e", "first_step": 0, "last_step": 0}, "created_at": 1})"
                        << "\n{not json\n";
    try {
        KnowledgeStore s(path);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::storage_failure);
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
}

TEST(KnowledgeStore, MissingFileStartsEmpty) {
    const auto dir = fixtures::temp_dir("knowledge-new");
    KnowledgeStore s((dir / "fresh.jsonl").string());
    EXPECT_EQ(s.size(), 0u);
}
