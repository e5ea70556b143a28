from nativqa.corpus import Locale, Topic, make_qa_pair


def build_pair(
    question,
    answer="Answer text.",
    url="https://example.com/page",
    domain="example.com",
    locale=None,
    topic="General",
    iteration=1,
    status=None,
):
    pair = make_qa_pair(
        question,
        answer,
        url,
        domain,
        locale or Locale("en", "Doha", "high"),
        Topic(topic),
        iteration,
    )
    if status == "accepted":
        return pair.with_status("annotation_pending").with_status("accepted")
    if status == "annotation_pending":
        return pair.with_status("annotation_pending")
    if status is not None and status != "harvested":
        return pair.with_status(status)
    return pair
