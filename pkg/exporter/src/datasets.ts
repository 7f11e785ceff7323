/**
 * Annotation parsing for the supported image-caption datasets.
 *
 * COCO uses the captions JSON (images[] + annotations[]); Flickr30k uses
 * the tab-separated token file ("12345.jpg#0<TAB>caption"). Both reduce
 * to the same shape: images with stable numeric ids, captions keyed by a
 * numeric caption id pointing at their image.
 */

export interface ImageRecord {
  id: bigint;
  fileName: string;
}

export interface CaptionRecord {
  id: bigint;
  imageId: bigint;
  text: string;
}

export interface Dataset {
  images: ImageRecord[];
  captions: CaptionRecord[];
}

export class DatasetError extends Error {}

interface CocoImage {
  id: number;
  file_name: string;
}

interface CocoAnnotation {
  id: number;
  image_id: number;
  caption: string;
}

export function parseCocoCaptions(jsonText: string): Dataset {
  let data: { images?: CocoImage[]; annotations?: CocoAnnotation[] };
  try {
    data = JSON.parse(jsonText);
  } catch (err) {
    throw new DatasetError(`annotation file is not valid JSON: ${err}`);
  }
  if (!Array.isArray(data.images) || !Array.isArray(data.annotations)) {
    throw new DatasetError("annotation JSON needs images[] and annotations[]");
  }
  const images = data.images.map((img) => ({
    id: BigInt(img.id),
    fileName: img.file_name,
  }));
  const known = new Set(images.map((img) => img.id));
  const captions: CaptionRecord[] = [];
  for (const ann of data.annotations) {
    const imageId = BigInt(ann.image_id);
    if (!known.has(imageId)) continue; // annotation for an image outside this split
    captions.push({ id: BigInt(ann.id), imageId, text: ann.caption });
  }
  return { images, captions };
}

/**
 * Flickr30k token lines: "1000092795.jpg#0\tTwo young guys ...". The
 * numeric file stem is the image id; caption id = image id * 10 + the
 * per-image caption index (at most 10 captions per image).
 */
export function parseFlickrTokens(tokenText: string): Dataset {
  const images = new Map<bigint, ImageRecord>();
  const captions: CaptionRecord[] = [];
  for (const [lineNo, line] of tokenText.split("\n").entries()) {
    if (!line.trim()) continue;
    const tab = line.indexOf("\t");
    if (tab < 0) throw new DatasetError(`line ${lineNo + 1}: no tab separator`);
    const key = line.slice(0, tab);
    const text = line.slice(tab + 1).trim();
    const match = /^(\d+)\.jpg#(\d+)$/.exec(key);
    if (!match) throw new DatasetError(`line ${lineNo + 1}: bad key ${key}`);
    const imageId = BigInt(match[1]);
    const index = BigInt(match[2]);
    if (index >= 10n) throw new DatasetError(`line ${lineNo + 1}: caption index ${index} >= 10`);
    if (!images.has(imageId)) {
      images.set(imageId, { id: imageId, fileName: `${match[1]}.jpg` });
    }
    captions.push({ id: imageId * 10n + index, imageId, text });
  }
  return { images: [...images.values()], captions };
}

/** Keep all captions or only the first per image. */
export function selectCaptions(dataset: Dataset, mode: "all" | "first"): CaptionRecord[] {
  if (mode === "all") return dataset.captions;
  const seen = new Set<bigint>();
  const first: CaptionRecord[] = [];
  for (const caption of dataset.captions) {
    if (seen.has(caption.imageId)) continue;
    seen.add(caption.imageId);
    first.push(caption);
  }
  return first;
}

/**
 * Restrict to a file-name subset (split list) and/or the first maxImages
 * images; captions of dropped images are dropped with them.
 */
export function applySplit(
  dataset: Dataset,
  keepFileNames?: Set<string>,
  maxImages?: number,
): Dataset {
  let images = dataset.images;
  if (keepFileNames) {
    images = images.filter((img) => keepFileNames.has(img.fileName));
  }
  if (maxImages !== undefined && maxImages >= 0) {
    images = images.slice(0, maxImages);
  }
  const kept = new Set(images.map((img) => img.id));
  return {
    images,
    captions: dataset.captions.filter((c) => kept.has(c.imageId)),
  };
}
