/** Traversal strips: a pinned row of thumbnails with the anchor marked first. */

export function renderStrip(
  images: string[],
  factorLabel: string,
  onRemove?: () => void,
): HTMLDivElement {
  const strip = document.createElement("div");
  strip.className = "fg-strip";
  strip.dataset.factor = factorLabel;

  const caption = document.createElement("span");
  caption.className = "fg-strip-label";
  caption.textContent = factorLabel;
  strip.append(caption);

  images.forEach((b64, i) => {
    const img = document.createElement("img");
    img.className = i === 0 ? "fg-cell fg-anchor" : "fg-cell";
    img.src = `data:image/png;base64,${b64}`;
    strip.append(img);
  });

  if (onRemove) {
    const close = document.createElement("button");
    close.className = "fg-strip-close";
    close.textContent = "unpin";
    close.addEventListener("click", () => {
      strip.remove();
      onRemove();
    });
    strip.append(close);
  }
  return strip;
}
