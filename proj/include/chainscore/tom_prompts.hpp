#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chainscore/chain_schema.hpp"
#include "chainscore/errors.hpp"
#include "chainscore/text.hpp"

namespace chainscore {

struct PromptTemplate {
  std::string task_id;
  int level = 1;
  std::string name;
  std::string body;  // placeholders as {field}; step headers appear verbatim
  std::vector<std::string> step_headers;
};

inline void validate_template(const PromptTemplate& t) {
  if (t.task_id.empty()) throw ConfigError("template without task_id");
  if (t.level < 1 || t.level > 3)
    throw ConfigError("template '" + t.task_id + "': level out of range");
  for (const auto& h : t.step_headers)
    if (t.body.find(h) == std::string::npos)
      throw ConfigError("template '" + t.task_id + "': step header '" + h +
                        "' missing from body");
}

namespace detail {

struct TemplateSeed {
  const char* id;
  int level;
  const char* name;
  const char* intro;
  std::vector<std::pair<const char*, const char*>> inputs;  // label, placeholder
  std::vector<const char*> guidance;                        // one line per step
  const char* answer_instruction;
};

inline std::vector<std::string> headers_for_level(int level) {
  switch (level) {
    case 1:
      return {"Step 1: Perceptual Simulation", "Step 2: Cognitive Empathy",
              "Step 3: Perspective-Taking", "Step 4: Conclude and Map"};
    case 2:
      return {"Step 1: Perceptual Simulation", "Step 2: Cognitive Empathy",
              "Step 3: Contextual Mind Modeling", "Step 4: Conclude and Map"};
    case 3:
      return {"Step 1: Perceptual Simulation", "Step 2: Cognitive Empathy",
              "Step 3: Causal Attribution", "Step 4: Second-Order Reasoning",
              "Step 5: Conclude and Map"};
    default:
      throw ConfigError("reasoning level " + std::to_string(level) + " out of range");
  }
}

inline PromptTemplate build_template(const TemplateSeed& seed) {
  PromptTemplate t;
  t.task_id = seed.id;
  t.level = seed.level;
  t.name = seed.name;
  t.step_headers = headers_for_level(seed.level);
  if (seed.guidance.size() != t.step_headers.size())
    throw ConfigError(std::string("template seed '") + seed.id + "': guidance count mismatch");
  std::ostringstream b;
  b << seed.intro << "\n\n";
  for (const auto& [label, field] : seed.inputs) b << label << ": {" << field << "}\n";
  b << "\nReason inside <think> ... </think> using exactly these steps:\n";
  for (std::size_t i = 0; i < t.step_headers.size(); ++i)
    b << t.step_headers[i] << "\n" << seed.guidance[i] << "\n";
  b << "\nThen give only the final answer inside <answer> ... </answer>. "
    << seed.answer_instruction << "\n";
  t.body = b.str();
  validate_template(t);
  return t;
}

inline const std::vector<TemplateSeed>& template_seeds() {
  static const std::vector<TemplateSeed> seeds = {
      {"FESD", 1, "Face Expression Sentiment Detection",
       "Decide the sentiment the person on screen is experiencing right now.",
       {{"Video description", "video_caption"}, {"Transcript", "text"}},
       {"Describe the observable facial cues: micro-expressions, gaze, head pose, and any vocal "
        "tone the clip conveys.",
        "From those cues alone, infer what the person is feeling in the moment; set aside how the "
        "scene makes you feel.",
        "Adopt the person's point of view and check the inferred feeling against everything they "
        "can see and hear; discard readings that rely on outside knowledge they lack.",
        "Settle on the sentiment the person holds and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},
      {"ISA", 1, "Image Sentiment Analysis",
       "Decide the dominant emotion an experiencer inside or implied by the image would feel.",
       {{"Image description", "image_caption"}},
       {"List what the scene shows: subjects, setting, lighting, and any charged objects or "
        "events.",
        "Infer what a person depicted in, or naturally placed into, this scene would feel, rather "
        "than your own reaction as a viewer.",
        "Take that experiencer's perspective and test the candidate emotion against the scene's "
        "affordances such as threat, celebration, or calm.",
        "Settle on the emotion grounded in the scene and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},
      {"MESA", 1, "Meme Sentiment Analysis",
       "Decide the sentiment the meme's creator intends the audience to take away.",
       {{"Image description", "image_caption"}, {"Overlaid text", "text"}},
       {"Describe the picture and the overlaid text separately, noting where they agree and where "
        "they clash.",
        "Infer the creator's attitude: agreement between channels reinforces it, a clash is "
        "usually deliberate irony, sarcasm, or humor.",
        "Read the meme as its intended audience would, asking what reaction the creator is "
        "steering them toward.",
        "Settle on the intended sentiment and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},
      {"MER", 1, "Multimodal Emotion Recognition",
       "Identify the speaker's current emotion from the combined channels.",
       {{"Video description", "video_caption"}, {"Audio description", "audio_caption"},
        {"Transcript", "text"}},
       {"Describe what each channel shows: visible behavior, vocal prosody, and the words used.",
        "Infer the speaker's immediate emotional state from the joint evidence, weighing channels "
        "that converge more heavily.",
        "Check the inferred state from the speaker's own perspective and resolve conflicts "
        "between channels strictly on the observable evidence.",
        "Settle on the speaker's emotion and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},
      {"MSA", 1, "Multimodal Sentiment Analysis",
       "Decide whether the speaker's overall stance in this clip is positive, negative, or "
       "neutral.",
       {{"Video description", "video_caption"}, {"Audio description", "audio_caption"},
        {"Transcript", "text"}},
       {"Describe the evaluative signals in each channel: wording, tone of voice, and visible "
        "demeanor.",
        "Infer the evaluative position the speaker is expressing, which is a stance rather than a "
        "momentary emotion.",
        "Confirm the stance from the speaker's own evaluative viewpoint instead of judging the "
        "content yourself.",
        "Settle on the polarity of the stance and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},
      {"OSA", 1, "Opinion Sentiment Analysis",
       "Decide the speaker's polarity toward the proposition they state.",
       {{"Video description", "video_caption"}, {"Audio description", "audio_caption"},
        {"Transcript", "text"}},
       {"Identify the proposition under discussion and the evaluative wording, emphasis, and "
        "delivery around it.",
        "Infer whether the speaker endorses, rejects, or stays neutral toward that proposition.",
        "Keep the judgment tied to the speaker's point of view on this proposition, not to a "
        "generic mood reading.",
        "Settle on the polarity toward the proposition and map it onto the closest allowed "
        "label."},
       "Answer with exactly one label from: {labels}."},
      {"SIA", 1, "Sentiment Intensity Analysis",
       "Rate the polarity and strength of the speaker's stance on the given scale.",
       {{"Video description", "video_caption"}, {"Audio description", "audio_caption"},
        {"Transcript", "text"}},
       {"Note the intensity carriers: lexical intensifiers or hedges, prosodic emphasis, and "
        "visible force or tension.",
        "Infer both the direction of the stance and how strongly it is held.",
        "Re-check direction and strength from the speaker's immediate evaluative position.",
        "Settle on the graded stance and map it onto the closest allowed scale label."},
       "Answer with exactly one label from: {labels}."},
      {"SOER", 1, "Song Emotion Recognition",
       "Identify the emotion the performer is enacting in this performance.",
       {{"Audio description", "audio_caption"}, {"Lyrics", "text"}},
       {"Describe the performance cues: vocal timbre, tempo, dynamics, and any facial or bodily "
        "expression, with lyrics when present.",
        "Infer the emotional state the performer is deliberately conveying through the "
        "performance.",
        "Frame the reading from the performer's expressive intent, not from how the music makes a "
        "listener feel.",
        "Settle on the enacted emotion and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},
      {"SPER", 1, "Speech Emotion Recognition",
       "Identify the speaker's emotion from this utterance.",
       {{"Audio description", "audio_caption"}, {"Transcript", "text"}},
       {"Describe the acoustic-prosodic cues such as pitch, energy, and pacing, any visible "
        "articulation cues, and the words spoken.",
        "Infer the speaker's inner state those signals express.",
        "Verify the inference from the speaker's side rather than from the impression left on a "
        "listener.",
        "Settle on the speaker's emotion and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},
      {"SCEA", 1, "Stock Comment Emotion Analysis",
       "Rate the commenter's evaluative stance toward the financial target, including its "
       "strength.",
       {{"Comment", "text"}},
       {"Note the evaluative cues: hedging or certainty wording, numeric framing, and any "
        "emphasis markers.",
        "Infer the commenter's current orientation toward the target and whether it is weakly or "
        "strongly held.",
        "Keep the reading anchored to the commenter's own outlook on this target in this market "
        "context.",
        "Settle on the graded stance and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},

      {"DPTM", 2, "Detection of Persuasion Techniques in Memes",
       "Identify every persuasion technique this meme employs.",
       {{"Image description", "image_caption"}, {"Overlaid text", "text"}},
       {"Describe the rhetorical surface: slogans, framing, exaggeration, symbols, and how image "
        "and text interact.",
        "Infer the reaction the creator wants to provoke in the audience.",
        "Bind each persuasive move to its target and purpose: who it praises or attacks and what "
        "conclusion it pushes the audience toward.",
        "List every technique that the evidence supports and map each onto the allowed labels."},
       "Answer with all applicable labels from: {labels}, comma-separated."},
      {"EBIA", 2, "Emotion-Based Intent Analysis",
       "Determine the communicative intent behind the speaker's utterance in this dialogue turn.",
       {{"Dialogue", "text"}, {"Audio description", "audio_caption"},
        {"Video description", "video_caption"}},
       {"Describe the speaker's cues in this turn: wording, delivery, and visible behavior, plus "
        "the dialogue context.",
        "Infer the speaker's emotional state from those cues.",
        "Contextualize that state toward the addressee: what the speaker is trying to do to them "
        "with this turn, such as questioning, consoling, or encouraging.",
        "Settle on the communicative intent and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},
      {"HU", 2, "Humor Understanding",
       "Decide whether this clip is meant to be humorous.",
       {{"Transcript", "text"}, {"Audio description", "audio_caption"},
        {"Video description", "video_caption"}},
       {"Describe the setup, the candidate punchline, and the delivery cues such as timing, "
        "laughter, or deadpan.",
        "Model what the audience expects as the setup unfolds.",
        "Check for a deliberate violation of that expectation: a reversal, double meaning, or "
        "absurdity the speaker plants for the audience.",
        "Decide whether the speaker intends amusement through such a mismatch and map the "
        "decision onto the allowed labels."},
       "Answer with exactly one label from: {labels}."},
      {"IAVE", 2, "Implicit Attribute Value Extraction",
       "Infer the product's value for the attribute \"{attribute}\" even though it is never "
       "stated outright.",
       {{"Product description", "text"}, {"Image description", "image_caption"}},
       {"Describe the product presentation: visual design cues and the metadata that accompanies "
        "it.",
        "Treat the presentation as a message from the designer and infer what property they are "
        "signaling.",
        "Bind the signal to the attribute in question: which hidden value the design choices are "
        "meant to communicate to an observer.",
        "Settle on the implied value and map it onto the allowed values."},
       "Answer with exactly one value from: {labels}."},
      {"MABSA", 2, "Multimodal Aspect-Based Sentiment Analysis",
       "Determine the author's sentiment toward the aspect \"{aspect}\".",
       {{"Post text", "text"}, {"Image description", "image_caption"}},
       {"Describe the cues that refer to this aspect across the text and the image.",
        "Infer the author's attitude toward this aspect specifically, keeping it separate from "
        "feelings about other targets in the post.",
        "Bind the attitude to the aspect in its context, treating cross-channel clashes as "
        "possible rhetorical devices but grounding the call in evidence.",
        "Settle on the sentiment toward this aspect and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},
      {"MQE", 2, "Multimodal Quintuple Extraction",
       "Extract every opinion expressed in the input as a structured quintuple.",
       {{"Dialogue", "text"}, {"Image description", "image_caption"}},
       {"Describe the evaluative statements present and who utters them.",
        "For each statement, infer the attitude being expressed and resolve who holds it, "
        "including pronoun and coreference links.",
        "Bind each attitude to its target and aspect so every opinion is a holder-target-aspect "
        "relation with an opinion phrase and a polarity.",
        "Assemble the complete list of quintuples supported by the evidence."},
       "Answer with one quintuple per item in the form (holder, target, aspect, opinion, "
       "sentiment), comma-separated."},
      {"MSD", 2, "Multimodal Stance Detection",
       "Determine the author's stance toward the claim \"{target}\".",
       {{"Post text", "text"}, {"Image description", "image_caption"}},
       {"Describe the stance cues in the post and how they relate to the stated claim.",
        "Infer the author's attitude at the moment of posting.",
        "Condition the attitude on the claim itself: supporting it, refuting it, merely "
        "commenting, or not engaging with it at all, which is stance rather than general "
        "sentiment.",
        "Settle on the target-specific stance and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},
      {"MDER", 2, "Multiparty Dialogue Emotion Recognition",
       "Identify the emotion of the focal speaker in the marked utterance.",
       {{"Dialogue", "text"}, {"Audio description", "audio_caption"},
        {"Video description", "video_caption"}},
       {"Describe the focal speaker's cues in the marked turn: wording, prosody, and visible "
        "expression.",
        "Infer the speaker's emotional state from those cues.",
        "Refine the reading using the conversation's structure: roles, turn-taking, and what "
        "earlier turns did to this speaker.",
        "Settle on the focal speaker's emotion and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},

      {"EER", 3, "Emotion Elicitation Reasoning",
       "Decide which emotion this film scene is designed to elicit in a generic viewer.",
       {{"Scene description", "video_caption"}, {"Audio description", "audio_caption"}},
       {"Describe the narrative events and cinematic devices in the scene: framing, music, "
        "pacing, and key actions.",
        "Consider a generic viewer watching the scene, not the characters inside it.",
        "Trace how specific events and devices trigger the viewer's appraisal along lines such "
        "as threat, loss, goal success, or attachment.",
        "Model the viewer's resulting reaction as the scene intends it to land on an audience.",
        "Settle on the single elicited emotion and map it onto the closest allowed label."},
       "Answer with exactly one label from: {labels}."},
      {"EI", 3, "Emotion Interpretation",
       "Explain why the subject feels the stated emotion.",
       {{"Scene description", "image_caption"}, {"Context", "text"}},
       {"Describe the observable evidence: the subject's expression and posture, and the events "
        "and objects around them.",
        "Infer the subject's experience of the situation from their own vantage point.",
        "Reconstruct the appraisal that links the visible situation to the emotion, such as goal "
        "obstruction, threat, or social evaluation.",
        "Check that the cause you name is the proximate, visible one rather than a speculative "
        "backstory.",
        "State the cause-to-emotion explanation concisely."},
       "Answer with a short explanation of why the subject feels this emotion."},
      {"LR", 3, "Laughter Reasoning",
       "Explain why the audience laughs at this moment.",
       {{"Transcript", "text"}, {"Audio description", "audio_caption"},
        {"Video description", "video_caption"}},
       {"Describe the setup, the punchline, and the delivery around the laughter.",
        "Model what the audience expected as the setup unfolded.",
        "Identify the trigger that breaks the expectation: an incongruity, reversal, irony, or "
        "norm violation the speaker planted.",
        "Explain how recognizing that mismatch reinterprets the moment into amusement for the "
        "audience.",
        "State the explanation of the laughter concisely."},
       "Answer with a short explanation of why the laughter occurs."},
      {"MECPE", 3, "Multimodal Emotion Cause Pair Extraction",
       "Extract the emotion-cause pairs in this conversation.",
       {{"Dialogue", "text"}, {"Audio description", "audio_caption"},
        {"Video description", "video_caption"}},
       {"Describe the emotional cues in the target utterance and the events in the preceding "
        "turns.",
        "Infer the speaker's emotional state in the target utterance.",
        "Link that state to the most proximate earlier utterance that explains it, keeping "
        "cause strictly before effect.",
        "Confirm the causal link reads correctly from both speakers' perspectives in the "
        "exchange.",
        "List each emotion with the utterance that causes it."},
       "Answer with one pair per item in the form (emotion utterance, cause utterance), "
       "comma-separated."},
      {"SD", 3, "Sarcasm Detection",
       "Decide whether the speaker is being sarcastic.",
       {{"Transcript", "text"}, {"Audio description", "audio_caption"},
        {"Video description", "video_caption"}},
       {"Describe the literal meaning of the utterance and its surface polarity, along with "
        "tone and facial cues.",
        "Infer what the speaker actually believes about the situation.",
        "Test for an engineered clash between the literal words and the context, where the "
        "speaker says one thing expecting the opposite to be understood.",
        "Confirm the speaker intends the audience to infer the reversed meaning, which "
        "separates sarcasm from mere humor or exaggeration.",
        "Decide and map the decision onto the allowed labels."},
       "Answer with exactly one label from: {labels}."},
      {"SFA", 3, "Sentiment Flip Analysis",
       "Track how the speaker's sentiment toward the target changes across the dialogue and "
       "what causes the change.",
       {{"Dialogue", "text"}, {"Image description", "image_caption"}},
       {"Describe the polarity cues each speaker expresses toward the target across the turns.",
        "Build the speaker's sentiment timeline: the stance they start with and the stance they "
        "end with.",
        "Locate the turn where the stance flips and identify the conversational cause, such as "
        "new information, an argument, feedback, or self-reflection.",
        "Check the cause precedes the flip and actually operates on the speaker's view of the "
        "target.",
        "State the initial sentiment, the flipped sentiment, and the trigger."},
       "Answer with the initial sentiment, the flipped sentiment, and the trigger type."},
  };
  return seeds;
}

}  // namespace detail

inline const std::map<std::string, PromptTemplate>& builtin_templates() {
  static const std::map<std::string, PromptTemplate> registry = [] {
    std::map<std::string, PromptTemplate> m;
    for (const auto& seed : detail::template_seeds()) m[seed.id] = detail::build_template(seed);
    return m;
  }();
  return registry;
}

inline const PromptTemplate& builtin_template(const std::string& task_id) {
  const auto& reg = builtin_templates();
  auto it = reg.find(task_id);
  if (it == reg.end()) throw ConfigError("no builtin template for task '" + task_id + "'");
  return it->second;
}

inline std::vector<std::string> builtin_task_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, t] : builtin_templates()) ids.push_back(id);
  return ids;
}

inline ChainSchema schema_from_template(const PromptTemplate& t) {
  return ChainSchema{t.task_id, t.step_headers};
}

/* Template file format: JSON with task_id, level, name, body, step_headers. */
inline PromptTemplate load_template_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open template file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("template file '" + path + "': " + e.what());
  }
  PromptTemplate t;
  try {
    t.task_id = j.at("task_id").get<std::string>();
    t.level = j.at("level").get<int>();
    t.name = j.value("name", t.task_id);
    t.body = j.at("body").get<std::string>();
    t.step_headers = j.at("step_headers").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("template file '" + path + "': " + e.what());
  }
  validate_template(t);
  return t;
}

/* Substitute every {field} placeholder; a placeholder without a binding is a
   configuration error naming the placeholder. */
inline std::string render_prompt(const PromptTemplate& t,
                                 const std::map<std::string, std::string>& fields) {
  std::string out;
  out.reserve(t.body.size());
  std::size_t i = 0;
  while (i < t.body.size()) {
    const char c = t.body[i];
    if (c != '{') {
      out.push_back(c);
      ++i;
      continue;
    }
    const std::size_t close = t.body.find('}', i + 1);
    bool is_placeholder = close != std::string::npos && close > i + 1;
    std::string key;
    if (is_placeholder) {
      key = t.body.substr(i + 1, close - i - 1);
      for (char k : key) {
        if (!(is_alnum(k) || k == '_')) {
          is_placeholder = false;
          break;
        }
      }
    }
    if (!is_placeholder) {
      out.push_back(c);
      ++i;
      continue;
    }
    auto it = fields.find(key);
    if (it == fields.end())
      throw ConfigError("template '" + t.task_id + "': no value for placeholder '{" + key + "}'");
    out += it->second;
    i = close + 1;
  }
  return out;
}

struct ToMLexicon {
  std::set<std::string> keywords;  // lowercase single tokens
  double eta = 5.0;                // hits at which the process score saturates
};

/* Mental-state vocabulary rewarded by the process term. Exact token match
   only: inflected variants are separate entries on purpose. */
inline ToMLexicon default_lexicon() {
  ToMLexicon lex;
  lex.keywords = {
      "belief",       "believes",    "desire",      "desires",     "intention",
      "intends",      "perspective", "appraisal",   "expectation", "expects",
      "assumes",      "assumption",  "perceives",   "perception",  "empathy",
      "empathize",    "feels",       "feeling",     "thinks",      "thinking",
      "wants",        "hopes",       "fears",       "goal",        "motive",
      "motivation",   "attitude",    "stance",      "viewpoint",   "interprets",
      "interpretation", "anticipates", "imagines",  "supposes",    "infers",
      "inference",    "awareness",   "aware",       "understands", "understanding",
  };
  return lex;
}

/* One keyword per line; '#' starts a comment. */
inline ToMLexicon load_lexicon_file(const std::string& path, double eta = 5.0) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon file '" + path + "'");
  ToMLexicon lex;
  lex.eta = eta;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string term = to_lower(trim(line));
    if (term.empty()) continue;
    const auto toks = tokenize(term);
    if (toks.size() != 1)
      throw ConfigError("lexicon file '" + path + "': entry '" + term + "' is not a single token");
    lex.keywords.insert(toks[0]);
  }
  if (lex.keywords.empty()) throw ConfigError("lexicon file '" + path + "' has no keywords");
  return lex;
}

/* Count of distinct lexicon tokens present in the reasoning body. */
inline std::size_t lexicon_hits(const std::string& think_body, const ToMLexicon& lex) {
  std::size_t hits = 0;
  for (const auto& tok : unique_tokens(think_body))
    if (lex.keywords.count(tok)) ++hits;
  return hits;
}

}  // namespace chainscore
