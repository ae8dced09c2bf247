// Prompt templates for segmentation, reflection and judging.

#include <string>
#include <string_view>

#include "segmem/evalkit.hpp"
#include "segmem/segmentation.hpp"

namespace segmem {

namespace {

constexpr std::string_view kSegmentationContext = R"(# Instruction
## Context
- **Goal**: Your task is to segment a multi-turn conversation between a
user and a chatbot into topically coherent units based on semantics.
Successive user-bot exchanges with the same topic should be grouped
into the same segmentation unit, and new segmentation units should
be created when topic shifts.
- **Data**: The input data is a series of user-bot exchanges separated
by "\n\n". Each exchange consists of a single-turn conversation between
the user and the chatbot, started with "[Exchange (Exchange Number)]: ".
)";

constexpr std::string_view kOutputFormat = R"(- Output the segmentation results in **JSONL (JSON Lines)** format.
Each dictionary represents a segment, consisting of one or more
user-bot exchanges on the same topic.
Each dictionary should include the following keys:
  - **segment_id**: The index of this segment, starting from 0.
  - **start_exchange_number**: The number of the **first** user-bot
  exchange in this segment.
  - **end_exchange_number**: The number of the **last**
  user-bot exchange in this segment.
  - **num_exchanges**: An integer indicating the number of
  user-bot exchanges in this segment, calculated as:
  **end_exchange_number** - **start_exchange_number** + 1.
Here is an example of the expected output:
```
<segmentation>
{"segment_id": 0, "start_exchange_number": 0, "end_exchange_number": 5, "num_exchanges": 6}
{"segment_id": 1, "start_exchange_number": 6, "end_exchange_number": 8, "num_exchanges": 3}
...
</segmentation>
```
)";

constexpr std::string_view kRequirements = R"(# Question
## Please generate the segmentation result from the input data that
meets the following requirements:
- **No Missing Exchanges**:  Ensure that the exchange numbers cover
all exchanges in the given conversation without omission.
- **No Overlapping Exchanges**: Ensure that successive segments have
no overlap in exchanges.
- **Accurate Counting**:  The sum of **num_exchanges**
across all segments should equal the total number of user-bot exchanges.
)";

constexpr std::string_view kRubricRequirement = R"(- **Utilize Segment Rubric**: Use the given segment rubric
and examples to better segment.
)";

constexpr std::string_view kClosing = R"(- Provide your segmentation result between the tags:
<segmentation></segmentation>.
# Output
Now, provide the segmentation result based on the instructions above.)";

constexpr std::string_view kReflectionHead = R"(# Instruction
## Context
**Goal**: Your task is to evaluate the differences between a language
model's predicted segmentation and the ground-truth segmentation made
by expert annotators for multiple human-bot conversations.
Analyze these differences, reflect on the prediction errors, and
generate one concise rubric item for future conversation segmentation.
You will be provided with some existing rubric items derived
from previous examples.
1. Begin by reviewing and copying the existing rubric items.
2. Modify, update, or replace the existing items if they do not
adequately address the current segmentation errors.
3. Generate only one new rubric item to minimize segmentation errors
in the given examples.
4. Select and reflect on the most representative example
from the provided data.
**Data**: You will receive a segmented conversation example,
including both the prediction and the ground-truth segmentation.
Each segment begins with "Segment segment_id:".
Additionally, you will be provided with some existing rubric items
derived from previous examples. Modify, update, or even replace them
if they do not adequately explain the current segmentation mistakes.
## Requirements
- Add at most one new rubric item at a time even
though multiple examples are provided.
- Ensure the rubric is user-centric, concise, and each item
is mutually exclusive.
- You can modify, update, or replace the existing items
if they do not adequately
address the current segmentation errors.
- Present your new rubric item within `<rubric></rubric>`.
- Provide the most representative example with your reflection
within `<example></example>`. Here is an example:
```
<reflection>
Your reflection on the prediction errors,
example by example.
</reflection>
<rubric>
- [one and only one new rubric item]
</rubric>
<example>
Present the most representative example,
along with your reflection on this example.
</example>
```
)";

constexpr std::string_view kJudgeIntro = R"(You are an impartial judge. You will be shown Related
Conversation History, User Question and Bot Response.
)";

constexpr std::string_view kJudgeCriterion =
    R"(Please evaluate whether Bot Response is faithful to the content of
Related Conversation History to answer User Question.
Begin your evaluation by providing a short explanation,
)";

std::string fenced(std::string_view title, const std::string& body) {
  std::string out = "```\n";
  out += title;
  out += "\n";
  out += body;
  out += "\n```\n";
  return out;
}

}  // namespace

std::string zero_shot_prompt(const std::string& rendered_session) {
  std::string p(kSegmentationContext);
  p += "### Output Format\n";
  p += kOutputFormat;
  p += "# Data\n";
  p += rendered_session;
  p += "\n";
  p += kRequirements;
  p += kClosing;
  return p;
}

std::string rubric_prompt(const std::string& rendered_session, const Rubric& rubric) {
  std::string p(kSegmentationContext);
  p += "- **Tips**: Refer fully to the provided rubric \nand examples for guidance on segmentation.\n";
  p += "## Requirements\n### Output Format\n";
  p += kOutputFormat;
  p += "## Segment Rubric\n";
  p += render_rubric_items(rubric.items);
  p += "\n## Segment Examples\n";
  p += render_rubric_examples(rubric.examples);
  p += "\n# Data\n";
  p += rendered_session;
  p += "\n";
  p += kRequirements;
  p += kRubricRequirement;
  p += kClosing;
  return p;
}

std::string render_rubric_items(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += "\n";
    out += "- " + items[i];
  }
  return out;
}

std::string render_rubric_examples(const std::vector<Rubric::Example>& examples) {
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i) out += "\n\n";
    out += "### Example " + std::to_string(i + 1) + "\n";
    out += "#### Ground Truth Segmentation\n" + examples[i].gold_rendering + "\n";
    out += "#### Predicted Segmentation\n" + examples[i].prediction_rendering + "\n";
    out += "#### Reflection\n" + examples[i].reflection;
  }
  return out;
}

std::string reflection_prompt(const std::vector<std::string>& past_items,
                              const std::vector<HardExample>& batch) {
  std::string examples;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (i) examples += "\n\n";
    examples += "## Example " + std::to_string(i + 1) + "\n";
    examples += "### Ground Truth Segmentation\n" +
                render_segmented(batch[i].session, batch[i].gold) + "\n";
    examples += "### Predicted Segmentation\n" +
                render_segmented(batch[i].session, batch[i].predicted);
  }
  std::string p(kReflectionHead);
  p += "# Existing Rubric: " + render_rubric_items(past_items) + "\n";
  p += "# Examples: " + examples + "\n\n";
  p += "# Output\n";
  return p;
}

std::string single_score_prompt(const std::string& history, const std::string& question,
                                const std::string& response) {
  std::string p(kJudgeIntro);
  p += fenced("Related Conversation History", history);
  p += fenced("User Question", question);
  p += fenced("Bot Response", response);
  p += kJudgeCriterion;
  p += "then you must rate Bot Response on an integer rating of 1 to \n100 \n";
  p += "by strictly following this format: \n<rating>an integer rating of 1 to 100</rating>.";
  return p;
}

std::string pairwise_prompt(const std::string& history, const std::string& question,
                            const std::string& response_a, const std::string& response_b) {
  std::string p(kJudgeIntro);
  p += fenced("Related Conversation History", history);
  p += fenced("User Question", question);
  p += fenced("Bot Response A", response_a);
  p += fenced("Bot Response B", response_b);
  p += kJudgeCriterion;
  p += "then you must choose the better bot response by giving \neither A or B. \n";
  p += "If the two responses are the same, you can choose NONE:\n<chosen>A (or B or NONE)</chosen>.";
  return p;
}

}  // namespace segmem
