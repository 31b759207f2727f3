// Geometry for the object overlay: scale pixel boxes of the source image to
// the on-screen stage.  When no image file exists, objects are drawn as
// labeled colored rectangles on a blank stage of the same aspect ratio.

export interface Rect {
  left: number;
  top: number;
  width: number;
  height: number;
}

export function stageSize(
  imageW: number,
  imageH: number,
  maxW: number,
  maxH: number,
): { width: number; height: number; scale: number } {
  const scale = Math.min(maxW / imageW, maxH / imageH);
  return { width: imageW * scale, height: imageH * scale, scale };
}

export function scaleBox(
  bbox: [number, number, number, number],
  scale: number,
): Rect {
  const [x, y, w, h] = bbox;
  return { left: x * scale, top: y * scale, width: w * scale, height: h * scale };
}

const PALETTE = [
  "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
  "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080",
  "#9a6324", "#800000", "#808000", "#000075", "#808080",
];

export function colorFor(categoryId: number): string {
  const index = ((categoryId % PALETTE.length) + PALETTE.length) % PALETTE.length;
  return PALETTE[index];
}
