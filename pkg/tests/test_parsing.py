"""Parsers for model output: grammar round-trips, plans, verdicts, questions."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from easel.errors import (
    FormatError,
    NoQuestionsFoundError,
    NoSubtasksFoundError,
    UnknownToolNameError,
)
from easel.parsing import (
    KeepPlan,
    ToolCall,
    parse_plan,
    parse_questions,
    parse_reflection,
    parse_tool_call,
    parse_yes_no,
    render_tool_call,
    resolve_tool_mention,
    split_numbered_items,
)

TOOLS = [
    "Resize",
    "Crop",
    "Paste",
    "Blending",
    "RGB2Gray",
    "GaussianBlur",
    "RotateClockwise",
    "RotateCounterClockwise",
    "EnhanceColor",
    "FlipHorizontal",
    "AddLogo",
    "AddWatermark",
    "GetSize",
    "ImageExpand",
    "InstructDiffusion",
    "Edict",
    "Prompt2Prompt",
    "GroundingDINO",
    "Inpainting",
    "LLaVA",
    "ImageDifferenceLLaVA",
    "AestheticScore",
]


# --- tool call grammar --------------------------------------------------------


def test_ascii_separator_vector():
    call = parse_tool_call("Resize @@ image/in.png <-> 512")
    assert call == ToolCall("Resize", ("image/in.png", "512"))


def test_arrow_separator_vector():
    call = parse_tool_call("Resize @@ image/in.png ↔ 512")
    assert call == ToolCall("Resize", ("image/in.png", "512"))


def test_mixed_separators_parse_alike():
    a = parse_tool_call("Blending @@ x.png <-> y.png ↔ 0.5")
    b = parse_tool_call("Blending @@ x.png <-> y.png <-> 0.5")
    assert a == b


def test_canonical_render_uses_ascii_separator():
    call = parse_tool_call("Resize @@ image/in.png ↔ 512")
    assert call.render() == "Resize @@ image/in.png <-> 512"


def test_zero_argument_call():
    assert parse_tool_call("GetSize @@") == ToolCall("GetSize", ())
    assert parse_tool_call("GetSize @@   ") == ToolCall("GetSize", ())
    assert render_tool_call("GetSize", ()) == "GetSize @@"


def test_empty_arguments_are_preserved():
    call = parse_tool_call("T @@ a <-> <-> b")
    assert call.args == ("a", "", "b")


def test_arguments_are_whitespace_trimmed():
    call = parse_tool_call("  Blending @@   x.png   <->  y.png  ")
    assert call == ToolCall("Blending", ("x.png", "y.png"))


def test_arguments_may_contain_spaces():
    call = parse_tool_call("InstructDiffusion @@ image/in.png <-> add a cowboy hat <-> 4.0")
    assert call.args[1] == "add a cowboy hat"


def test_first_call_line_wins_in_chatty_output():
    text = "Sure, here is the call.\n\nResize @@ image/in.png <-> 512\nHope that helps!"
    assert parse_tool_call(text) == ToolCall("Resize", ("image/in.png", "512"))


def test_missing_marker_raises():
    with pytest.raises(FormatError):
        parse_tool_call("Resize image/in.png 512")


def test_empty_tool_token_raises():
    with pytest.raises(FormatError):
        parse_tool_call("@@ image/in.png <-> 512")


def test_multiword_tool_token_raises():
    with pytest.raises(FormatError):
        parse_tool_call("Use Resize @@ image/in.png <-> 512")


@pytest.mark.parametrize(
    "tool,args",
    [
        ("", ("x",)),
        ("two words", ("x",)),
        ("T", ("",)),
        ("T", ("a <-> b",)),
        ("T", ("a ↔ b",)),
        ("T", ("a @@ b",)),
        ("T", ("a\nb",)),
        ("T", (" padded ",)),
    ],
)
def test_render_rejects_unrepresentable_calls(tool, args):
    with pytest.raises(FormatError):
        render_tool_call(tool, args)


_ARG_TEXT = st.text(
    alphabet=st.characters(
        categories=["L", "N", "P", "S", "Zs"],
        max_codepoint=0x2000,
        exclude_characters="@↔",
    ),
    min_size=0,
    max_size=25,
).map(str.strip).filter(lambda s: "<->" not in s)

_TOOL_NAME = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789",
    min_size=1,
    max_size=20,
)


@settings(max_examples=200)
@given(tool=_TOOL_NAME, args=st.lists(_ARG_TEXT, max_size=5))
def test_grammar_round_trip(tool, args):
    if args == [""]:
        args = []
    rendered = render_tool_call(tool, tuple(args))
    assert parse_tool_call(rendered) == ToolCall(tool, tuple(args))


@settings(max_examples=200)
@given(tool=_TOOL_NAME, args=st.lists(_ARG_TEXT.filter(bool), max_size=5))
def test_canonicalization_is_idempotent(tool, args):
    once = parse_tool_call(render_tool_call(tool, tuple(args)))
    twice = parse_tool_call(once.render())
    assert once == twice


# --- numbered item splitting -----------------------------------------------


def test_single_line_semicolon_plan_splits():
    text = "1. Resize the image using Resize; 2. Add a hat using InstructDiffusion; 3. Apply a filter Edict."
    items = split_numbered_items(text)
    assert len(items) == 3
    assert items[0] == "Resize the image using Resize"
    assert items[2] == "Apply a filter Edict."


def test_multi_line_plan_splits():
    text = "Here is the plan:\n1) Crop the image using Crop\n2) Blur it using GaussianBlur\n"
    items = split_numbered_items(text)
    assert items == ["Crop the image using Crop", "Blur it using GaussianBlur"]


def test_decimal_numbers_do_not_split_items():
    items = split_numbered_items("1. Set the factor to 2.5 using EnhanceColor")
    assert items == ["Set the factor to 2.5 using EnhanceColor"]


def test_sizes_with_trailing_periods_do_not_split():
    items = split_numbered_items("1. Resize to 800 pixels using Resize; 2. Sharpen using Edict")
    assert len(items) == 2


# --- plan parsing ---------------------------------------------------------------


def test_parse_plan_example_decomposition():
    text = (
        "1. Resize the image to have its longest side at 800 pixels using Resize; "
        "2. Add a vintage-style hat to the person in the image using Instructdiffusion; "
        "3. Apply a sepia tone filter to the entire image Edict."
    )
    plan = parse_plan(text, TOOLS)
    assert [s.tool_name for s in plan] == ["Resize", "InstructDiffusion", "Edict"]
    assert [s.index for s in plan] == [1, 2, 3]


def test_parse_plan_reindexes_model_numbering():
    text = "2. Flip the image using FlipHorizontal\n5. Convert to gray with RGB2Gray\n9. Check size via GetSize"
    plan = parse_plan(text, TOOLS)
    assert [s.index for s in plan] == [1, 2, 3]
    assert plan[2].tool_name == "GetSize"


def test_parse_plan_keeps_goal_text():
    plan = parse_plan("1. Rotate the photo clockwise using RotateClockwise", TOOLS)
    assert plan[0].goal_text == "Rotate the photo clockwise using RotateClockwise"


def test_parse_plan_without_items_raises():
    with pytest.raises(NoSubtasksFoundError):
        parse_plan("I would resize the image and then add a hat.", TOOLS)


def test_parse_plan_unknown_tool_carries_line():
    with pytest.raises(UnknownToolNameError) as excinfo:
        parse_plan("1. Sharpen the image using SuperSharpen", TOOLS)
    assert "SuperSharpen" in excinfo.value.line


def test_resolution_prefers_longest_mention():
    line = "Compare the two images using ImageDifferenceLLaVA"
    assert resolve_tool_mention(line, TOOLS) == "ImageDifferenceLLaVA"


def test_resolution_prefers_rightmost_among_equals():
    line = "blend with Paste or maybe Edict"
    assert resolve_tool_mention(line, TOOLS) == "Edict"


def test_resolution_is_case_and_punctuation_insensitive():
    assert resolve_tool_mention("convert with rgb-2-gray", TOOLS) == "RGB2Gray"
    assert resolve_tool_mention("use `instructdiffusion` here", TOOLS) == "InstructDiffusion"


def test_resolution_inside_longer_word():
    assert resolve_tool_mention("ensure the image is cropped to the region", TOOLS) == "Crop"


# --- reflection -----------------------------------------------------------------


def test_reflection_no_keeps_plan():
    assert isinstance(parse_reflection("No", TOOLS), KeepPlan)
    assert isinstance(parse_reflection('  "No"  ', TOOLS), KeepPlan)
    assert isinstance(parse_reflection("No, the current plan is fine.", TOOLS), KeepPlan)


def test_reflection_revised_plan_parses():
    text = "Yes, the order was wrong.\n1. Resize the image using Resize\n2. Add the hat using InstructDiffusion"
    plan = parse_reflection(text, TOOLS)
    assert [s.tool_name for s in plan] == ["Resize", "InstructDiffusion"]


def test_reflection_plain_plan_parses():
    plan = parse_reflection("1. Blur the background using GaussianBlur", TOOLS)
    assert plan[0].tool_name == "GaussianBlur"


def test_reflection_notes_are_not_keep():
    with pytest.raises(NoSubtasksFoundError):
        parse_reflection("Nothing needs to change, but here is no plan.", TOOLS)


# --- verdicts --------------------------------------------------------------------


@pytest.mark.parametrize(
    "text,verdict,explanation",
    [
        ("Yes", "yes", ""),
        ("yes, the hat is present.", "yes", "the hat is present."),
        ("No - artifacts remain near the brim", "no", "- artifacts remain near the brim"),
        ("NO.", "no", ""),
        ('"Yes" it looks natural', "yes", "it looks natural"),
    ],
)
def test_parse_yes_no_verdicts(text, verdict, explanation):
    assert parse_yes_no(text) == (verdict, explanation)


@pytest.mark.parametrize("text", ["Maybe", "I cannot tell from the image", "Nope", ""])
def test_parse_yes_no_everything_else_is_unknown(text):
    verdict, explanation = parse_yes_no(text)
    assert verdict == "unknown"
    assert explanation == text.strip()


# --- questions --------------------------------------------------------------------


def test_parse_questions_happy_path():
    text = (
        "1. Is the size of image changed to 800?\n"
        "2. Does the image show a nighttime scene?\n"
        "3. Are the streetlights turned on?\n"
        "4. Is the overall quality of the image natural and free of artifacts?\n"
    )
    questions = parse_questions(text)
    assert len(questions) == 4
    assert questions[0] == "Is the size of image changed to 800?"


def test_parse_questions_drops_invalid_items():
    text = (
        "1. Check the size of the image.\n"
        "2. Is the hat present?\n"
        "3. The colors look washed out\n"
        "4. Was the background replaced?\n"
    )
    assert parse_questions(text) == ["Is the hat present?", "Was the background replaced?"]


def test_parse_questions_caps_at_five():
    text = "\n".join(f"{i}. Is check number {i} satisfied?" for i in range(1, 8))
    assert len(parse_questions(text)) == 5


def test_parse_questions_all_invalid_raises():
    with pytest.raises(NoQuestionsFoundError):
        parse_questions("1. Look closely at the image.\n2. Describe the subject.")


def test_parse_questions_failure_is_reprompt_eligible():
    with pytest.raises(FormatError):
        parse_questions("no numbered items here at all")
