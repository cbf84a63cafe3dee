#include <mobileuse/action.hpp>
#include <mobileuse/types.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace mobileuse;

TEST(ActionSerialization, CanonicalSwipe) {
    const auto a = Action::swipe({120, 400}, {120, 1200});
    EXPECT_EQ(render_action(a),
              R"({"action_type": "swipe", "coordinate": [120, 400], "coordinate2": [120, 1200]})");
}

TEST(ActionSerialization, CanonicalForms) {
    EXPECT_EQ(render_action(Action::click(540, 1200)), R"({"action_type": "click", "coordinate": [540, 1200]})");
    EXPECT_EQ(render_action(Action::long_press(1, 2, 1.5)),
              R"({"action_type": "long_press", "coordinate": [1, 2], "time": 1.5})");
    EXPECT_EQ(render_action(Action::wait(2)), R"({"action_type": "wait", "time": 2})");
    EXPECT_EQ(render_action(Action::clear_text()), R"({"action_type": "clear_text"})");
    EXPECT_EQ(render_action(Action::system_button(SystemButton::enter)),
              R"({"action_type": "system_button", "button": "Enter"})");
    EXPECT_EQ(render_action(Action::terminate(TerminateStatus::success)),
              R"({"action_type": "terminate", "status": "success"})");
    EXPECT_EQ(render_action(Action::type_text("say \"hi\"")), R"({"action_type": "type", "text": "say \"hi\""})");
}

TEST(ActionSerialization, ParseToleratesWhitespaceAndKeyOrder) {
    const auto a = parse_action(R"({ "coordinate2":[3,4] ,"action_type":"swipe","coordinate":[1,2]})");
    EXPECT_EQ(a, Action::swipe({1, 2}, {3, 4}));
}

TEST(ActionSerialization, ParseErrors) {
    try {
        parse_action(R"({"action_type": "fly"})");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::unknown_action_type);
    }
    EXPECT_THROW(parse_action("not json"), Error);
    EXPECT_THROW(parse_action(R"({"action_type": "click", "coordinate": [1.5, 2]})"), Error);
    EXPECT_THROW(parse_action(R"({"action_type": "click", "coordinate": [1, 2], "text": "x"})"), Error);
    EXPECT_THROW(parse_action(R"({"action_type": "system_button", "button": "Power"})"), Error);
}

namespace {

Action random_action(std::mt19937& rng) {
    std::uniform_int_distribution<int> type_pick(0, 11);
    std::uniform_int_distribution<int> coord(0, 3000);
    std::uniform_int_distribution<int> len(0, 12);
    std::uniform_int_distribution<int> ch(32, 126);
    auto text = [&] {
        std::string s;
        for (int i = len(rng); i > 0; --i) s += static_cast<char>(ch(rng));
        return s;
    };
    auto seconds = [&] { return std::uniform_int_distribution<int>(1, 400)(rng) / 8.0; };
    switch (static_cast<ActionType>(type_pick(rng))) {
        case ActionType::key: return Action::key(text());
        case ActionType::click: return Action::click(coord(rng), coord(rng));
        case ActionType::long_press: return Action::long_press(coord(rng), coord(rng), seconds());
        case ActionType::swipe: return Action::swipe({coord(rng), coord(rng)}, {coord(rng), coord(rng)});
        case ActionType::type: return Action::type_text(text());
        case ActionType::clear_text: return Action::clear_text();
        case ActionType::system_button:
            return Action::system_button(static_cast<SystemButton>(std::uniform_int_distribution<int>(0, 3)(rng)));
        case ActionType::open: return Action::open(text());
        case ActionType::wait: return Action::wait(seconds());
        case ActionType::take_note: return Action::take_note(text());
        case ActionType::answer: return Action::answer(text());
        case ActionType::terminate:
            return Action::terminate(rng() % 2 ? TerminateStatus::success : TerminateStatus::failure);
    }
    return Action::clear_text();
}

}  // namespace

TEST(ActionSerialization, RenderParseRoundTripProperty) {
    std::mt19937 rng(7);
    for (int i = 0; i < 2000; ++i) {
        const auto a = random_action(rng);
        const auto text = render_action(a);
        ASSERT_EQ(parse_action(text), a) << text;
        ASSERT_EQ(render_action(parse_action(text)), text);
    }
}

TEST(ActionTypeSpan, LocatesValue) {
    const std::string text = R"({"action_type": "long_press", "coordinate": [1, 2], "time": 1})";
    const auto span = find_action_type_span(text);
    ASSERT_TRUE(span);
    EXPECT_EQ(text.substr(span->begin, span->end - span->begin), "long_press");
    EXPECT_FALSE(find_action_type_span("{\"coordinate\": [1, 2]}"));
}

TEST(ValidateAction, WithinBounds) {
    EXPECT_TRUE(validate_action(Action::click(540, 1200), 1080, 2400).ok());
}

TEST(ValidateAction, RightEdgeIsOutOfBounds) {
    const auto r = validate_action(Action::click(1080, 10), 1080, 2400);
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(*r.error, Errc::out_of_bounds);
    EXPECT_TRUE(validate_action(Action::click(1079, 2399), 1080, 2400).ok());
    EXPECT_EQ(*validate_action(Action::click(-1, 0), 1080, 2400).error, Errc::out_of_bounds);
}

TEST(ValidateAction, SwipeMissingSecondCoordinate) {
    Action a;
    a.type = ActionType::swipe;
    a.coordinate = Point{10, 10};
    const auto r = validate_action(a, 1080, 2400);
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(*r.error, Errc::missing_parameter);
}

TEST(ValidateAction, NonPositiveTimeAndExtraParams) {
    EXPECT_FALSE(validate_action(Action::wait(0), 100, 100).ok());
    EXPECT_FALSE(validate_action(Action::long_press(1, 1, -1), 100, 100).ok());
    auto a = Action::click(1, 1);
    a.text = "x";
    EXPECT_FALSE(validate_action(a, 100, 100).ok());
    EXPECT_FALSE(validate_action(Action::click(1, 1), 0, 100).ok());
}

TEST(ActionEquals, Examples) {
    EXPECT_TRUE(action_equals(Action::click(10, 10), Action::click(10, 10)));
    EXPECT_FALSE(action_equals(Action::click(10, 10), Action::click(10, 11)));
    ActionOutput x{"I should type a", Action::type_text("a"), "Type a"};
    ActionOutput y{"different reasoning", parse_action(R"({"action_type": "type", "text": "a"})"), "Enter the letter"};
    EXPECT_TRUE(action_equals(x.action, y.action));
    EXPECT_FALSE(action_equals(Action::type_text("a"), Action::open("a")));
}

TEST(Instruction, RejectsBlankText) {
    EXPECT_THROW(Instruction::make("   \n\t"), Error);
    EXPECT_EQ(Instruction::make("Open Tasks").text, "Open Tasks");
}

TEST(ConfidenceScore, MeanOfLogprobsProperty) {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> lp(-20.0, 0.0);
    for (int i = 0; i < 500; ++i) {
        std::vector<TokenLogprob> tokens(1 + rng() % 6);
        double sum = 0;
        for (auto& t : tokens) {
            t.logprob = lp(rng);
            sum += t.logprob;
        }
        const auto score = ConfidenceScore::from_tokens(tokens);
        EXPECT_NEAR(score.value, sum / tokens.size(), 1e-9);
        EXPECT_EQ(score.token_count(), tokens.size());
    }
    EXPECT_THROW(ConfidenceScore::from_tokens({}), Error);
    EXPECT_THROW(ConfidenceScore::from_tokens({{"x", 0.1}}), Error);
}

TEST(StepRecord, OneReflectionPerLevel) {
    StepRecord step;
    step.set_reflection({ReflectionLevel::trajectory, Verdict::ok, "", std::nullopt, 0});
    step.set_reflection({ReflectionLevel::action, Verdict::error, "missed", std::nullopt, 0});
    step.set_reflection({ReflectionLevel::action, Verdict::ok, "", std::nullopt, 0});
    ASSERT_EQ(step.reflections.size(), 2u);
    EXPECT_EQ(step.reflections[0].level, ReflectionLevel::action);
    EXPECT_EQ(step.reflections[0].verdict, Verdict::ok);
    EXPECT_EQ(step.reflections[1].level, ReflectionLevel::trajectory);
}

TEST(ReflectionFeedback, Invariants) {
    EXPECT_FALSE((ReflectionFeedback{ReflectionLevel::global, Verdict::error, "x", std::nullopt, 0}.valid()));
    EXPECT_FALSE((ReflectionFeedback{ReflectionLevel::action, Verdict::error, "", std::nullopt, 0}.valid()));
    EXPECT_TRUE((ReflectionFeedback{ReflectionLevel::global, Verdict::incomplete, "missing", std::nullopt, 0}.valid()));
}
