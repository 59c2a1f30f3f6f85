def normalize_spaces(text):
    return " ".join(text.split())
