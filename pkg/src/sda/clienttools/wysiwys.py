"""What-you-see-is-what-you-sign: review a rendering, then sign the document.

The signature's view binding records the stylesheet id and the digest of the
exact text shown, so a verifier that re-renders the document can confirm the
signer saw precisely what is being verified.  Interactive confirmation types
back a code derived from the displayed text, binding screen to keyboard;
``--yes`` style forced confirmation exists for scripting.
"""

from __future__ import annotations

from typing import Callable

from ..edoc import EDoc, RenderedView, attach_signature
from ..keystore import SoftKeystore


class WysiwysError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


def confirmation_code(view: RenderedView) -> str:
    return view.view_digest[:6]


def review_and_sign(
    doc: EDoc,
    view: RenderedView,
    keystore: SoftKeystore,
    pin: str,
    *,
    assume_yes: bool = False,
    prompt: Callable[[str], str] = input,
    display: Callable[[str], None] = print,
    signed_at: int | None = None,
) -> EDoc:
    """Show *view*, ask for confirmation, sign *doc* with the view binding.

    The caller must have produced *view* by rendering exactly *doc*; a render
    failure upstream means this function is never reached.
    """
    display(view.text)
    if not assume_yes:
        code = confirmation_code(view)
        display(f"confirmation code: {code}")
        typed = prompt("type the confirmation code to sign (empty aborts): ").strip()
        if typed.lower() != code.lower():
            raise WysiwysError("USER_ABORT", "confirmation code mismatch")
    block = keystore.sign_bytes(
        pin,
        doc.content_bytes(),
        view_binding=(view.stylesheet_id, view.view_digest),
        signed_at=signed_at,
    )
    return attach_signature(doc, block)
