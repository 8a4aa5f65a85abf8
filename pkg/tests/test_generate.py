import random

import pytest

from conftest import ReplayBackend, thread_from_parents
from threadsmith.generate import (
    EmptyCompletionError,
    GenerationConfig,
    build_scaffold_from_thread,
    generate_content,
    generate_scaffold_fewshot,
    generate_thread_baseline,
    rouge_l_f,
    summarize_post,
    trim_completion,
    validity_metric,
)
from threadsmith.llm import Gateway
from threadsmith.threads import Post, Thread, serialize_thread
from threadsmith.topics import TopicSet

VALID_TEXT = "\n".join(
    [
        "title: Which stove for winter trips?",
        "post # user-1 # NA # Looking at canister stoves for cold weather.",
        "comment-1 # user-2 # post # Inverted canister designs handle frost better.",
        "comment-2 # user-1 # comment-1 # Good point, I had not considered that.",
    ]
)

INVALID_TEXT = "\n".join(
    [
        "title: Which stove for winter trips?",
        "post # user-1 # NA # Looking at canister stoves.",
        "comment-1 # user-2 # comment-5 # Replying to a post that is not there.",
    ]
)


def _gateway(*completions, rules=()):
    return Gateway(ReplayBackend(completions, rules=rules))


def _train(n=3):
    threads = []
    for i in range(n):
        t = thread_from_parents([None, 0, 1], title=f"train {i}")
        threads.append(
            Thread(
                title=t.title,
                posts=t.posts,
                topics=(f"topic-{i}", "shared"),
                community="c",
            )
        )
    return threads


def test_trim_completion_keeps_leading_thread_blocks():
    noisy = VALID_TEXT + "\n\nHope that helps! Let me know if you need more."
    assert trim_completion(noisy) == VALID_TEXT


def test_trim_completion_stops_at_first_bad_block():
    text = VALID_TEXT + "\n\nSome chatter.\n\n" + VALID_TEXT
    assert trim_completion(text) == VALID_TEXT


def test_trim_completion_passthrough_when_nothing_matches():
    assert trim_completion("no structure at all") == "no structure at all"


def test_trim_completion_joins_blank_separated_post_blocks():
    parts = VALID_TEXT.split("\n")
    spaced = "\n".join(parts[:2]) + "\n\n" + "\n".join(parts[2:])
    assert trim_completion(spaced) == VALID_TEXT


def test_baseline_valid_completion():
    topics = TopicSet(("camping", "stoves"), community="c")
    gateway = _gateway(VALID_TEXT)
    outcome = generate_thread_baseline(
        topics, _train(), gateway, GenerationConfig(mode="baseline"), random.Random(0)
    )
    assert outcome.ok
    assert outcome.thread.topics == ("camping", "stoves")
    assert outcome.thread.community == "c"
    assert len(outcome.thread.posts) == 3
    assert outcome.raw_completion == VALID_TEXT
    prompt = outcome.stage_transcript[0][0]
    assert "camping, stoves" in prompt
    # exemplars are serialized without their topics line
    assert "topics:" not in prompt


def test_baseline_invalid_completion():
    topics = TopicSet(("camping",))
    outcome = generate_thread_baseline(
        topics, _train(), _gateway(INVALID_TEXT), GenerationConfig(), random.Random(0)
    )
    assert not outcome.ok
    assert outcome.thread is None
    assert not outcome.validity.is_valid
    assert outcome.validity.violations


def test_baseline_needs_enough_examples():
    with pytest.raises(ValueError):
        generate_thread_baseline(
            TopicSet(("a",)),
            _train(1),
            _gateway(VALID_TEXT),
            GenerationConfig(num_examples=2),
            random.Random(0),
        )


def test_scaffold_fewshot_valid():
    topics = TopicSet(("camping",), community="c")
    outcome = generate_scaffold_fewshot(
        topics, _train(), _gateway(VALID_TEXT), GenerationConfig(), random.Random(1)
    )
    assert outcome.ok
    assert outcome.thread.topics == ("camping",)


def test_summarize_post_first_paragraph():
    gateway = _gateway("The user asks about stoves.\n\nExtra chatter here.")
    summary = summarize_post("Long post body.", [("p", "The user wrote p.")], gateway)
    assert summary == "The user asks about stoves."


def test_summarize_post_flattens_multiline_paragraph():
    gateway = _gateway("The user asks\nabout stoves.")
    assert (
        summarize_post("b", [("p", "s")], gateway) == "The user asks about stoves."
    )


def test_summarize_post_empty_raises():
    with pytest.raises(EmptyCompletionError):
        summarize_post("b", [("p", "s")], _gateway("   \n\n  "))


def test_summarize_post_needs_exemplars():
    with pytest.raises(ValueError):
        summarize_post("b", [], _gateway("x"))


def test_build_scaffold_preserves_structure():
    thread = thread_from_parents([None, 0, 0, 2], users=2)
    gateway = _gateway("The user says a thing.")
    scaffold = build_scaffold_from_thread(thread, gateway, [("p", "s")])
    assert [p.post_id for p in scaffold.posts] == [p.post_id for p in thread.posts]
    assert [p.parent_id for p in scaffold.posts] == [p.parent_id for p in thread.posts]
    assert [p.user_id for p in scaffold.posts] == [p.user_id for p in thread.posts]
    assert all(p.body == "The user says a thing." for p in scaffold.posts)
    assert scaffold.title == thread.title


def _scaffold():
    return Thread(
        title="Trail mix ideas",
        posts=(
            Post("post", "user-1", "NA", "The user asks for trail mix ideas."),
            Post("comment-1", "user-2", "post", "The user suggests nuts and dates."),
            Post("comment-2", "user-1", "comment-1", "The user thanks them."),
        ),
        topics=("snacks", "hiking"),
        community="c",
    )


def test_generate_content_fills_bodies_in_order():
    outputs = ["Opening body.", "Reply body.", "Nested reply body."]
    gateway = _gateway(*outputs)
    outcome = generate_content(
        _scaffold(),
        [("The user asks.", "Sure, here is my post.")],
        gateway,
        GenerationConfig(),
        random.Random(0),
    )
    assert outcome.ok
    assert [p.body for p in outcome.thread.posts] == outputs
    assert [p.post_id for p in outcome.thread.posts] == ["post", "comment-1", "comment-2"]
    assert outcome.thread.topics == ("snacks", "hiking")
    assert len(outcome.stage_transcript) == 3


def test_generate_content_renders_parent_chain():
    gateway = _gateway("Opening body.", "Reply body.", "Nested reply body.")
    outcome = generate_content(
        _scaffold(),
        [("s", "p")],
        gateway,
        GenerationConfig(),
        random.Random(0),
    )
    last_prompt = outcome.stage_transcript[2][0]
    assert "user-1: Opening body." in last_prompt
    assert "user-2: Reply body." in last_prompt
    # the summary of the post being written is in the prompt too
    assert "The user thanks them." in last_prompt


def test_generate_content_zero_shot_has_no_examples():
    gateway = _gateway("A body.")
    scaffold = Thread(
        title="t",
        posts=(Post("post", "user-1", "NA", "The user asks."),),
        topics=("a",),
    )
    outcome = generate_content(
        scaffold, [], gateway, GenerationConfig(content_mode="zero-shot"), random.Random(0)
    )
    assert outcome.ok
    assert "The summary of the post is:" in outcome.stage_transcript[0][0]


def test_generate_content_fewshot_requires_pairs():
    with pytest.raises(ValueError):
        generate_content(
            _scaffold(), [], _gateway("x"), GenerationConfig(), random.Random(0)
        )


def test_generate_content_rejects_invalid_scaffold():
    bad = Thread(
        title="t",
        posts=(
            Post("post", "user-1", "NA", "s"),
            Post("comment-1", "user-2", "comment-9", "s"),
        ),
    )
    with pytest.raises(ValueError):
        generate_content(bad, [("s", "p")], _gateway("x"), GenerationConfig(), random.Random(0))


def test_generate_content_empty_completion_aborts():
    gateway = _gateway("Opening body.", "   ")
    outcome = generate_content(
        _scaffold(), [("s", "p")], gateway, GenerationConfig(), random.Random(0)
    )
    assert not outcome.ok
    assert "comment-1" in outcome.failure


def test_config_validation():
    with pytest.raises(ValueError):
        GenerationConfig(mode="finetune")
    with pytest.raises(ValueError):
        GenerationConfig(content_mode="one-shot")
    with pytest.raises(ValueError):
        GenerationConfig(num_examples=-1)
    with pytest.raises(ValueError):
        GenerationConfig(content_example_resampling="sometimes")


def test_rouge_l_f_values():
    assert rouge_l_f("a b c", "a b c") == 1.0
    assert rouge_l_f("a b", "c d") == 0.0
    assert rouge_l_f("", "a") == 0.0
    # lcs("a b c d", "a c d b") = "a c d": P = R = 3/4
    assert rouge_l_f("a b c d", "a c d b") == pytest.approx(0.75)


def test_validity_metric_perfect_match():
    batch = [VALID_TEXT, VALID_TEXT]
    assert validity_metric(batch, batch) == pytest.approx(1.0)


def test_validity_metric_alpha_zero_half_valid():
    generated = [VALID_TEXT, "garbage that will not parse"]
    references = [VALID_TEXT, VALID_TEXT]
    assert validity_metric(generated, references, alpha=0.0) == 0.5


def test_validity_metric_validation():
    with pytest.raises(ValueError):
        validity_metric(["a"], ["a", "b"])
    with pytest.raises(ValueError):
        validity_metric([], [])
    with pytest.raises(ValueError):
        validity_metric(["a"], ["a"], alpha=1.5)


def test_example_threads_serialized_without_topics_line():
    # the exemplar output side is the bare fielded text
    train = _train(2)
    rendered = serialize_thread(train[0], include_topics=False)
    assert rendered.startswith("title:")
