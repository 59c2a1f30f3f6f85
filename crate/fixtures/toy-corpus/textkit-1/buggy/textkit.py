def normalize_spaces(text):
    return text.replace("  ", " ").strip()
