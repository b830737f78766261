#include <gtest/gtest.h>

#include "fieldvqa/response_parser.hpp"
#include "fixtures.hpp"

using namespace fieldvqa;
using fieldvqa::testing::fields_of;
using fieldvqa::testing::golden_samples;
using fieldvqa::testing::numeric_field;

namespace {

constexpr auto kDot = NumericProfile::kGroupingDot;

const FieldSpec kTax = numeric_field("tax", "Tax");
const FieldSpec kChange = numeric_field("change", "Change");
const FieldSpec kSubtotal = numeric_field("subtotal", "Subtotal");
const FieldSpec kTotal = numeric_field("total", "Total");
const FieldSpec kCash = numeric_field("cash", "Cash");

TEST(ScanBlocks, KeepsRawNumberSpelling) {
  auto blocks = scan_structured_blocks(R"(Here: {"total": 48.000, "cash": 1,346,000} done)");
  ASSERT_EQ(blocks.size(), 1u);
  ASSERT_EQ(blocks[0].pairs.size(), 2u);
  EXPECT_EQ(blocks[0].pairs[0], (std::pair<std::string, std::string>{"total", "48.000"}));
  EXPECT_EQ(blocks[0].pairs[1], (std::pair<std::string, std::string>{"cash", "1,346,000"}));
}

TEST(ScanBlocks, FlattensNestedAndToleratesTruncation) {
  auto blocks = scan_structured_blocks(R"({"sub_total": {"tax_price": "4.364"}, "total": {"total_price": "48.0)");
  ASSERT_EQ(blocks.size(), 1u);
  std::map<std::string, std::string> got(blocks[0].pairs.begin(), blocks[0].pairs.end());
  EXPECT_EQ(got["tax_price"], "4.364");
  EXPECT_EQ(got["total_price"], "48.0");
}

TEST(ScanBlocks, MarkdownFenceAndSingleQuotes) {
  auto blocks = scan_structured_blocks("```json\n{'tax': '4.364'}\n```");
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].pairs.at(0).second, "4.364");
}

TEST(KeyAlignment, Scores) {
  EXPECT_EQ(key_alignment("tax", kTax), 3);
  EXPECT_EQ(key_alignment("Tax", kTax), 3);
  EXPECT_GE(key_alignment("tax_price", kTax), 1);
  EXPECT_GE(key_alignment("cashprice", kCash), 1);
  EXPECT_GE(key_alignment("Credit Card", numeric_field("creditcard", "Credit Card")), 2);
  EXPECT_EQ(key_alignment("currency", kTax), 0);
  EXPECT_EQ(key_alignment("subtotal_price", kTotal), 0);
}

TEST(ParseSeparate, StructuredBlock) {
  auto p = parse_separate_response(R"({"tax_price": "4.364."})", kTax, kDot);
  EXPECT_EQ(p.raw, "4.364.");
  EXPECT_EQ(p.source, ValueSource::kJsonBlock);
}

TEST(ParseSeparate, ProseEndingInComputation) {
  const std::string text =
      "The receipt shows a total amount of 51,300 and a tax price of 10%. We can calculate the tax price as "
      "follows:\nTax Price = Total Amount x Tax Rate\n= 51,300 x 0.10\n= 5,130";
  auto p = parse_separate_response(text, kTax, kDot);
  EXPECT_EQ(p.raw, "5,130");
  EXPECT_EQ(p.source, ValueSource::kProseTail);
}

TEST(ParseSeparate, ProseWithFinalValueSentence) {
  const std::string text =
      "The receipt shows a total amount of 80,500 and a cash payment of 100,000. To calculate the change, we "
      "subtract the total from the payment amount: 100,000 - 80,500 = 19,500. This calculation reveals that the "
      "change amount is 19,500.";
  auto p = parse_separate_response(text, kChange, kDot);
  EXPECT_EQ(p.source, ValueSource::kProseTail);
  EXPECT_TRUE(values_match(p.raw, "19.500", FieldKind::kNumeric, kDot).matched);
}

TEST(ParseSeparate, NoCandidateIsUnparseable) {
  auto p = parse_separate_response("I cannot determine this.", kTax, kDot);
  EXPECT_FALSE(p.found());
  EXPECT_EQ(p.source, ValueSource::kNone);
}

TEST(ParseSeparate, KeyValueLine) {
  auto p = parse_separate_response("Sure!\n**Tax:** 4.364\nLet me know.", kTax, kDot);
  EXPECT_EQ(p.raw, "4.364");
  EXPECT_EQ(p.source, ValueSource::kKeyValueLine);
}

TEST(ParseJoint, GoldenSamplesMatchEveryField) {
  for (const auto& s : golden_samples()) {
    auto fields = fields_of(s.gold);
    auto parsed = parse_joint_response(s.joint_text, fields, kDot);
    ASSERT_EQ(parsed.size(), fields.size());
    for (const auto& f : fields) {
      ASSERT_TRUE(parsed.at(f.id).found()) << f.id;
      EXPECT_TRUE(values_match(parsed.at(f.id).raw, s.gold.at(f.id), f.kind, kDot).matched) << f.id;
    }
  }
}

TEST(ParseJoint, SampleTwoRawValues) {
  auto s = golden_samples()[1];
  auto parsed = parse_joint_response(s.joint_text, fields_of(s.gold), kDot);
  EXPECT_EQ(parsed.at("tax").raw, "4.364");
  EXPECT_EQ(parsed.at("cash").raw, "50.000");
}

TEST(ParseSeparate, GoldenSamplesReproduceMismatchesExactly) {
  for (const auto& s : golden_samples()) {
    std::set<std::string> mismatched;
    for (const auto& f : fields_of(s.gold)) {
      // Each field answered on its own, in both the bare and the one-key block form.
      auto bare = parse_separate_response(s.separate_raw.at(f.id), f, kDot);
      auto block = parse_separate_response(
          fmt::format(R"({{"{}": "{}"}})", s.key_of.at(f.id), s.separate_raw.at(f.id)), f, kDot);
      EXPECT_EQ(block.source, ValueSource::kJsonBlock);
      bool bare_ok = values_match(bare.raw, s.gold.at(f.id), f.kind, kDot).matched;
      bool block_ok = values_match(block.raw, s.gold.at(f.id), f.kind, kDot).matched;
      EXPECT_EQ(bare_ok, block_ok) << f.id;
      if (!block_ok) mismatched.insert(f.id);
    }
    EXPECT_EQ(mismatched, s.expected_separate_mismatches);
  }
}

TEST(ParseJoint, ExtraKeysAreIgnored) {
  std::vector<FieldSpec> fields = {kSubtotal, kTax, kTotal};
  auto parsed =
      parse_joint_response(R"({"currency": "IDR", "subtotal": "10.000", "tax": "1.000", "total": "11.000"})",
                           fields, kDot);
  EXPECT_EQ(parsed.at("subtotal").raw, "10.000");
  EXPECT_EQ(parsed.at("tax").raw, "1.000");
  EXPECT_EQ(parsed.at("total").raw, "11.000");
}

TEST(ParseJoint, MissingFieldFallsBackToKeyValueLine) {
  std::vector<FieldSpec> fields = {kSubtotal, kTax, kTotal};
  auto parsed = parse_joint_response("{\"subtotal\": \"10.000\", \"total\": \"11.000\"}\nTax: 1.000", fields, kDot);
  EXPECT_EQ(parsed.at("tax").raw, "1.000");
  EXPECT_EQ(parsed.at("tax").source, ValueSource::kKeyValueLine);
}

TEST(ParseJoint, UnresolvedFieldIsUnparseable) {
  std::vector<FieldSpec> fields = {kSubtotal, kTax};
  auto parsed = parse_joint_response(R"({"subtotal": "10.000"})", fields, kDot);
  EXPECT_FALSE(parsed.at("tax").found());
}

TEST(ParseJoint, AgreesWithSeparateOnSingleBlock) {
  const std::string text = R"({"subtotal_price": "43.636", "tax_price": "4.364", "total_price": "48.000"})";
  std::vector<FieldSpec> fields = {kSubtotal, kTax, kTotal};
  auto joint = parse_joint_response(text, fields, kDot);
  for (const auto& f : fields) {
    auto single = parse_joint_response(text, std::span(&f, 1), kDot);
    EXPECT_EQ(single.at(f.id), parse_separate_response(text, f, kDot)) << f.id;
    EXPECT_EQ(joint.at(f.id), single.at(f.id)) << f.id;
  }
}

// Hand-written prose answers in the style of a chatty model: values appear as
// "Name: value" lines, often with markdown decoration.
struct ProseCase {
  std::string text;
  std::map<std::string, std::string> expect;  // field id -> gold value
};

TEST(ParseJoint, ProseFixtures) {
  std::vector<FieldSpec> fields = {kSubtotal, kTax, kTotal};
  const std::vector<ProseCase> cases = {
      {"Subtotal: 10,000\nTax: 1,000\nTotal: 11,000", {{"subtotal", "10.000"}, {"tax", "1.000"}, {"total", "11.000"}}},
      {"Here are the values:\n- Subtotal: 43.636\n- Tax: 4.364\n- Total: 48.000",
       {{"subtotal", "43.636"}, {"tax", "4.364"}, {"total", "48.000"}}},
      {"**Subtotal:** Rp 25.000\n**Tax:** Rp 2.500\n**Total:** Rp 27.500",
       {{"subtotal", "25.000"}, {"tax", "2.500"}, {"total", "27.500"}}},
      {"1. Subtotal: 1,346,000\n2. Tax: 144,695\n3. Total: 1,591,600",
       {{"subtotal", "1,346,000"}, {"tax", "144,695"}, {"total", "1,591,600"}}},
      {"Subtotal = 60.000\nTax = 6.000\nTotal = 66.000", {{"subtotal", "60.000"}, {"tax", "6.000"}, {"total", "66.000"}}},
      {"The receipt lists the following.\n\nSubtotal: 18.182\nTax: 1.818\nTotal: 20.000\n\nHope this helps!",
       {{"subtotal", "18.182"}, {"tax", "1.818"}, {"total", "20.000"}}},
      {"* Subtotal: 9.091\n* Tax: 909\n* Total: 10.000", {{"subtotal", "9.091"}, {"tax", "909"}, {"total", "10.000"}}},
      {"Total: 33.000\nSubtotal: 30.000\nTax: 3.000", {{"subtotal", "30.000"}, {"tax", "3.000"}, {"total", "33.000"}}},
      {"- **Subtotal**: 120,000\n- **Tax**: 12,000\n- **Total**: 132,000",
       {{"subtotal", "120.000"}, {"tax", "12.000"}, {"total", "132.000"}}},
      {"Subtotal: 50.000.\nTax: 5.000.\nTotal: 55.000.", {{"subtotal", "50.000"}, {"tax", "5.000"}, {"total", "55.000"}}},
  };
  ASSERT_EQ(cases.size(), 10u);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    auto parsed = parse_joint_response(cases[i].text, fields, kDot);
    for (const auto& [id, gold] : cases[i].expect) {
      const auto& p = parsed.at(id);
      EXPECT_EQ(p.source, ValueSource::kKeyValueLine) << "case " << i << " field " << id;
      EXPECT_TRUE(values_match(p.raw, gold, FieldKind::kNumeric, kDot).matched)
          << "case " << i << " field " << id << " raw '" << p.raw << "'";
    }
  }
}

}  // namespace
