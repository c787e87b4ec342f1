"""Writes data/gold/stems.tsv: word, NLTK Porter stem, expected m2v stem.

The m2v stemmer only runs Porter steps 1a/1b and restores a final e on
short stems ending in vowel+s ("using" -> "use"), so a few words diverge
from NLTK on purpose. Those are listed in DIVERGENT with the reason.
"""
import pathlib
import sys

from nltk.stem.porter import PorterStemmer

WORDS = """click clicks clicking clicked selects selecting selected select checks checked
checking unchecked unchecking types typing typed inputs input inputting opens opening
opened presses pressing pressed enters entering entered right-clicking double-clicked
buttons menus icons tabs fields windows hopping filing hoped falling failing sized filed
using used uses choosing chooses chose agreed feed caresses ponies ties cats""".split()

# word -> (expected, reason)
DIVERGENT = {
    "using": ("use", "vowel+s e-restoration; use, using and used must share a root"),
    "used": ("use", "vowel+s e-restoration"),
    "uses": ("use", "vowel+s e-restoration"),
    "choosing": ("choose", "vowel+s e-restoration keeps the lexicon key 'choose'"),
    "chooses": ("choose", "step 1a only; no later Porter steps"),
    "agreed": ("agree", "no Porter step 5 (final-e removal)"),
}


def main() -> None:
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/gold/stems.tsv")
    stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)
    lines = ["# word\tnltk\texpected\tnote"]
    for w in WORDS:
        nltk = stemmer.stem(w)
        expected, note = DIVERGENT.get(w, (nltk, ""))
        lines.append(f"{w}\t{nltk}\t{expected}\t{note}")
    out.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
