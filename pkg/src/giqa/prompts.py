"""Prompt templates, the description question pool, and the stopword list.

All templates are versioned here so mock fixtures can be keyed by prompt
digest and runs stay reproducible.
"""
from __future__ import annotations

PROMPTS_VERSION = "1"

# Question pool for description samples; one entry is drawn per record.
QUESTION_POOL = (
    "Describe the quality of this image in detail.",
    "Provide a detailed assessment of this image's quality.",
    "How would you rate the quality of this image? Describe it in detail.",
    "Give a thorough description of the image quality.",
    "Analyze the quality of this image and describe your findings.",
    "What is the overall quality of this image? Explain in detail.",
    "Please describe this image's quality, covering any notable issues.",
    "Evaluate the image quality and describe the factors affecting it.",
    "Write a detailed description of the quality of this picture.",
    "Assess this image's quality and detail anything that degrades it.",
    "Describe in detail how good or bad the quality of this image is.",
    "Provide a comprehensive evaluation of this image's quality.",
    "Examine this image and describe its quality thoroughly.",
    "Can you describe the quality of this image at length?",
    "Report on the quality of this image with specific details.",
)

TAG_EXTRACTION_PROMPT = """\
You are given a description of an image's quality. List every distinct \
object or region the description mentions, one per line, in the form:

phrase | quality | effect

where `phrase` is the exact wording used for the object or region, \
`quality` is the quality word applied to it (e.g. clear, blurry, noisy), \
and `effect` is the object's effect on overall image quality: one of \
no-impact, positive, or negative. If no objects are mentioned, reply \
with the single word: none.

Description:
{description}
"""

BINARY_QA_PROMPT = """\
Generate yes/no questions about the image quality facts below. Write one \
question per line in the form:

question | Yes

for questions directly supported by the description, and

question | No

for plausible quality questions about the listed objects that the \
description does not support. Ask only about the listed objects.

Objects: {objects}

Description:
{description}
"""

OPEN_QA_PROMPT = """\
Generate open-ended questions about low-level quality attributes in the \
description below. Each question must start with What, Why, or How, and \
each answer must be a short phrase (at most a few words), inferred from \
the description. Write one pair per line in the form:

question | answer

Ask only about the listed objects.

Objects: {objects}

Description:
{description}
"""

DESCRIPTION_JUDGE_PROMPT = """\
Rate how relevant the candidate image-quality description is to the \
reference description. Reply with a single integer score from 0 to 4, \
where 4 means fully consistent and 0 means unrelated.

Reference:
{reference}

Candidate:
{candidate}

Score (0-4):"""

OPEN_ANSWER_JUDGE_PROMPT = """\
Rate how well the response answers the question, given the correct \
answer. Reply with a single integer score from 0 to 4, where 4 means \
fully correct and 0 means wrong or unrelated.

Question:
{question}

Correct answer:
{reference}

Response:
{candidate}

Score (0-4):"""

# 50-word English stopword list used for keyword matching and name
# similarity; changing it changes filter/metric behavior, keep versioned.
STOPWORDS = frozenset(
    """a an the and or but if then is are was were be been being of in on
    at to for with by from as it its this that these those there here
    what which who whom why how when where not no yes do does did has
    have had""".split()
)

assert len(STOPWORDS) == 50


def tag_extraction_prompt(description: str) -> str:
    return TAG_EXTRACTION_PROMPT.format(description=description)


def binary_qa_prompt(description: str, objects: str) -> str:
    return BINARY_QA_PROMPT.format(description=description, objects=objects)


def open_qa_prompt(description: str, objects: str) -> str:
    return OPEN_QA_PROMPT.format(description=description, objects=objects)


def description_judge_prompt(candidate: str, reference: str) -> str:
    return DESCRIPTION_JUDGE_PROMPT.format(candidate=candidate, reference=reference)


def open_answer_judge_prompt(question: str, candidate: str, reference: str) -> str:
    return OPEN_ANSWER_JUDGE_PROMPT.format(
        question=question, candidate=candidate, reference=reference
    )
