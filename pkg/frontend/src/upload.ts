/** Client-side downscaling of uploaded images to the model resolution, so
 * payloads stay bounded no matter what the user drops in. */

export async function fileToDataUrl(file: Blob): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(String(reader.result));
    reader.onerror = () => reject(reader.error);
    reader.readAsDataURL(file);
  });
}

export function dataUrlToBase64(dataUrl: string): string {
  const comma = dataUrl.indexOf(",");
  return comma >= 0 ? dataUrl.slice(comma + 1) : dataUrl;
}

/** Resamples through a canvas; falls back to the original bytes where canvas
 * is unavailable (the server still validates resolution). */
export async function downscaleToResolution(
  file: Blob,
  resolution: number,
): Promise<string> {
  const dataUrl = await fileToDataUrl(file);
  if (typeof document === "undefined") return dataUrlToBase64(dataUrl);
  const canvas = document.createElement("canvas");
  const ctx = canvas.getContext && canvas.getContext("2d");
  if (!ctx || typeof Image === "undefined") return dataUrlToBase64(dataUrl);

  const img = new Image();
  await new Promise<void>((resolve, reject) => {
    img.onload = () => resolve();
    img.onerror = () => reject(new Error("image failed to decode"));
    img.src = dataUrl;
  });
  canvas.width = resolution;
  canvas.height = resolution;
  ctx.drawImage(img, 0, 0, resolution, resolution);
  return dataUrlToBase64(canvas.toDataURL("image/png"));
}
