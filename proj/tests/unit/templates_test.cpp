#include <mobileuse/error.hpp>
#include <mobileuse/templates.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "support/fixtures.hpp"

using namespace mobileuse;

TEST(Templates, ShippedFilesMatchBuiltInDefaults) {
    for (auto role : all_agent_roles()) {
        const auto path = fixtures::source_path("templates/" + std::string(to_string(role)) + ".txt");
        std::ifstream in(path, std::ios::binary);
        ASSERT_TRUE(in) << path;
        std::ostringstream ss;
        ss << in.rdbuf();
        EXPECT_EQ(ss.str(), TemplateCatalog::default_text(role)) << path;
    }
}

TEST(Templates, DefaultsUseOnlyAllowedSlots) {
    const TemplateCatalog catalog;
    for (auto role : all_agent_roles()) {
        for (const auto& slot : catalog.get(role).referenced_slots()) {
            EXPECT_TRUE(allowed_slots(role).count(slot)) << to_string(role) << " uses " << slot;
        }
    }
    // The operator sees every input the decision depends on.
    EXPECT_EQ(catalog.get(AgentRole::operator_agent).referenced_slots(),
              (std::set<std::string>{"instruction", "knowledge", "progress", "history", "feedback", "images"}));
}

TEST(Templates, ParseAndRender) {
    const auto t = PromptTemplate::parse(AgentRole::action_reflector,
                                         "[system]\nBe careful.\n[user]\nTask: {{instruction}}\nDid: {{action}}\n");
    EXPECT_EQ(t.system_text, "Be careful.");
    EXPECT_EQ(t.render_user({{"instruction", "go"}, {"action", "tap"}}), "Task: go\nDid: tap");
    EXPECT_EQ(t.render_user({{"instruction", "go"}}), "Task: go\nDid: ");
}

TEST(Templates, RejectsUnknownSlotsAndBadLayout) {
    auto code = [](AgentRole role, const std::string& text) {
        try {
            PromptTemplate::parse(role, text);
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::invalid_argument;
    };
    EXPECT_EQ(code(AgentRole::action_reflector, "[system]\nx\n[user]\n{{knowledge}}"), Errc::schema_error);
    EXPECT_EQ(code(AgentRole::operator_agent, "[user]\n{{instruction}}"), Errc::schema_error);
    EXPECT_EQ(code(AgentRole::operator_agent, "[system]\n{{instruction}}\n[user]\nx"), Errc::schema_error);
    EXPECT_EQ(code(AgentRole::summary, "[system]\nx\n[user]\n{{instruction}}"), Errc::schema_error);
}

TEST(Templates, DirectoryOverridesSomeRoles) {
    const auto dir = fixtures::temp_dir("templates");
    std::ofstream(dir / "critic.txt") << "[system]\nCustom critic.\n[user]\n{{app}}";
    const auto catalog = TemplateCatalog::from_directory(dir.string());
    EXPECT_EQ(catalog.get(AgentRole::critic).system_text, "Custom critic.");
    EXPECT_EQ(catalog.get(AgentRole::operator_agent).system_text,
              TemplateCatalog().get(AgentRole::operator_agent).system_text);

    std::ofstream(dir / "summary.txt") << "[system]\nx\n[user]\n{{feedback}}";
    EXPECT_THROW(TemplateCatalog::from_directory(dir.string()), Error);
    EXPECT_THROW(TemplateCatalog::from_directory((dir / "missing").string()), Error);
}
