"""Prompt templates for every LLM-facing task, plus a kind router for mocks.

All templates share the PromptTemplate skeleton from llm.py. Task inputs that
interleave several labeled pieces (topics + summary, thread-so-far) are
composed by the build_* helpers here so render_prompt stays generic.
"""
from __future__ import annotations

from .llm import PromptTemplate

_THREAD_LAYOUT = (
    "The conversation should be represented as follows:\n"
    'The first line starts with "title:" followed by the title of the discussion '
    "thread. This is followed by n lines, each corresponding to a post in the "
    "thread. There is always at least an initial post, which may be followed by "
    "comments from users. Users can comment on the original post or any of the "
    "previous comments. Users can make multiple comments, but each comment should "
    "specify which previous comment it is a reply to."
)

_THREAD_FIELDS = (
    "Each post should include the following four fields, separated by hashtags (#):\n"
    "\n"
    '1. The ID of the post. The value is either "post", if it is the initial post, '
    'or "comment-X" (where X is 1, 2, 3, etc.)\n'
    '2. The ID of the user who wrote the post. The value is "user-Y" (where Y is '
    '1, 2, 3, etc.) The initial post is always written by "user-1".\n'
    '3. The ID of the parent post. The value is "NA" if it is the initial post, '
    '"post" if it is a comment to the initial post, or "comment-X" is it is a '
    "reply to one of the previous comments.\n"
    "4. The content of the post."
)

_SCAFFOLD_FIELDS = (
    "Each post should include four fields separated by hashtags (#):\n"
    "\n"
    '1. The ID of the post, which is "post" for the initial post and "comment-X" '
    "for the following comments, where X is 1, 2, 3, etc.\n"
    "2. The ID of the user who wrote the post, following the format \"user-Y\", "
    "where Y is 1, 2, 3, etc. The initial post is always written by \"user-1\".\n"
    "3. Whether the comment is a reply to the original post or to one of the "
    "previous comments. If it's a reply to the original post, this field should "
    'contain the text "post". If it\'s a reply to a previous comment, it should '
    'contain the keyword "comment" followed by the number of the comment it\'s '
    "replying to. In case of the initial post, this field always has the value "
    '"NA".\n'
    "4. The content of the post. It should be a somewhat coherent sentence "
    'expressing the intent of the user, written in third person and starting '
    'with "The user".'
)

# First lines vary by platform; the rest of each prompt is shared.
_THREAD_FIRST_LINE = {
    "reddit": "Given a list of topics, create a single thread of Reddit-like conversations.",
    "wikitalk": (
        "Given a list of topics, create a single thread of conversations that "
        "happens on Wikipedia Talk Pages."
    ),
}
_SCAFFOLD_FIRST_LINE = {
    "reddit": "Given a list of topics, create a single thread of a Reddit-like conversation.",
    "wikitalk": (
        "Given a list of topics, create a single thread of a conversation that "
        "happens on Wikipedia Talk Pages."
    ),
}


def _platform_line(table: dict[str, str], platform: str) -> str:
    try:
        return table[platform]
    except KeyError:
        raise ValueError(f"unknown platform {platform!r}") from None


def thread_generation_template(platform: str = "reddit") -> PromptTemplate:
    intro = "\n\n".join(
        [_platform_line(_THREAD_FIRST_LINE, platform), _THREAD_LAYOUT, _THREAD_FIELDS]
    )
    return PromptTemplate(
        intro=intro,
        example_prefix="Here is an example:",
        example_input_prefix="TOPICS:",
        example_output_prefix="THREAD:",
        input_task_prefix="Now, create a thread for the following:",
        input_prefix="TOPICS:",
        output_prefix="THREAD:",
    )


def scaffold_generation_template(platform: str = "reddit") -> PromptTemplate:
    intro = "\n\n".join(
        [_platform_line(_SCAFFOLD_FIRST_LINE, platform), _THREAD_LAYOUT, _SCAFFOLD_FIELDS]
    )
    return PromptTemplate(
        intro=intro,
        example_prefix="Here is an example:",
        example_input_prefix="TOPICS:",
        example_output_prefix="THREAD:",
        input_task_prefix="Now, create a thread for the following:",
        input_prefix="TOPICS:",
        output_prefix="THREAD:",
    )


TOPIC_EXTRACTION = PromptTemplate(
    intro="Extract topics from social media threads.\nHere are some examples:",
    example_input_prefix="Here is a thread:",
    example_output_prefix="Here are the topics for the thread:",
    input_prefix="Here is a thread:",
    output_prefix="Here are the topics for the thread:",
)

SUMMARIZATION = PromptTemplate(
    intro=(
        "You are summarizing social media posts. The summary should be written "
        'in third person, starting with "The user".'
    ),
    example_prefix="Here is an example:",
    example_input_prefix="POST:",
    example_output_prefix="SUMMARY:",
    input_task_prefix="Now, summarize the following post:",
    input_prefix="POST:",
    output_prefix="SUMMARY:",
)

FIRST_POST = PromptTemplate(
    intro="You are writing the first post of a thread on a discussion forum.",
    example_prefix="Here is an example of how to write the post based on the summary.",
    example_input_prefix="The summary of the post is:",
    example_output_prefix="The post text is:",
    output_prefix="The post text is:",
)

NEXT_POST = PromptTemplate(
    intro="You are writing the next post of a thread on a discussion forum.",
    example_prefix="Here is an example of how to write the post based on the summary.",
    example_input_prefix="The summary of the post is:",
    example_output_prefix="The post text is:",
    output_prefix="The post text is:",
)

COHERENCE_JUDGE = PromptTemplate(
    intro=(
        "You are an expert analyst of online discussions on forum sites like "
        "Reddit. On forum sites, discussions are started by posts, and posts can "
        "receive reply posts. Reply posts can also receive further reply posts. "
        'A "discussion path" is a sequence of replies starting with the initial '
        "post.\n"
        "\n"
        "Sometimes Reddit reply posts are falsified or fake. When this happens, "
        "the discussion could become unrealistic or not coherent. Your job is to "
        "examine a given discussion path and determine whether it seems "
        "realistic and coherent."
    ),
    example_prefix="Here is an example:",
)

TOPIC_CLASSIFIER = PromptTemplate(
    intro=(
        "You are labeling a discussion thread with topics from a fixed list. "
        "For each matching topic output one line in the form topic: confidence, "
        "where confidence is a number between 0 and 1. Output nothing else."
    ),
    input_task_prefix="Here is the thread:",
    output_prefix="Topics:",
)


def build_first_post_input(topics_csv: str, summary: str) -> str:
    return (
        "The thread will discuss the following topics:\n"
        f"{topics_csv}\n"
        "The summary of the post is:\n"
        f"{summary}"
    )


def build_next_post_input(topics_csv: str, thread_so_far: list[str], summary: str) -> str:
    lines = [
        "The thread discusses the following topics:",
        topics_csv,
        "The thread so far is:",
        *thread_so_far,
        "The summary of the post is:",
        summary,
    ]
    return "\n".join(lines)


# Stable task names used by fixture backends and transcript tags.
KIND_EXTRACT_TOPICS = "extract-topics"
KIND_SUMMARIZE = "summarize"
KIND_GENERATE_THREAD = "generate-thread"
KIND_GENERATE_SCAFFOLD = "generate-scaffold"
KIND_FIRST_POST = "first-post"
KIND_NEXT_POST = "next-post"
KIND_JUDGE_PATH = "judge-path"
KIND_CLASSIFY = "classify-topics"
KIND_UNKNOWN = "unknown"

GENERATION_KINDS = frozenset(
    {
        KIND_EXTRACT_TOPICS,
        KIND_SUMMARIZE,
        KIND_GENERATE_THREAD,
        KIND_GENERATE_SCAFFOLD,
        KIND_FIRST_POST,
        KIND_NEXT_POST,
    }
)


def prompt_kind(prompt: str) -> str:
    """Classify a rendered prompt by task. Used by canned backends and audits."""
    first = prompt.split("\n", 1)[0]
    if first.startswith("Extract topics from social media threads"):
        return KIND_EXTRACT_TOPICS
    if first.startswith("You are summarizing social media posts"):
        return KIND_SUMMARIZE
    if first.startswith("You are writing the first post"):
        return KIND_FIRST_POST
    if first.startswith("You are writing the next post"):
        return KIND_NEXT_POST
    if first.startswith("You are an expert analyst of online discussions"):
        return KIND_JUDGE_PATH
    if first.startswith("You are labeling a discussion thread"):
        return KIND_CLASSIFY
    if first.startswith("Given a list of topics"):
        if "expressing the intent of the user" in prompt:
            return KIND_GENERATE_SCAFFOLD
        return KIND_GENERATE_THREAD
    return KIND_UNKNOWN
