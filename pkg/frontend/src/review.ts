// Parent review console: the full draft (texts and illustrations) with
// approve / regenerate controls and a free-text note for the regeneration.

import { ApiClient, ApiError } from "./api.js";
import type { EpisodeView } from "./types.js";

export interface ReviewOptions {
  client: ApiClient;
  sessionId: string;
  onApproved?: () => void;
  onRegenerated?: () => void;
}

export class ReviewConsole {
  private root: HTMLElement | null = null;
  private view: EpisodeView | null = null;
  private note = "";
  private busy = false;
  private error = "";

  constructor(private options: ReviewOptions) {}

  async load(): Promise<void> {
    this.view = await this.options.client.getEpisode(this.options.sessionId);
    this.rerender();
  }

  async approve(): Promise<void> {
    this.busy = true;
    this.rerender();
    try {
      await this.options.client.review(this.options.sessionId, "approve");
      this.options.onApproved?.();
    } catch (err) {
      this.error = err instanceof ApiError ? err.detail : String(err);
    } finally {
      this.busy = false;
      this.rerender();
    }
  }

  async regenerate(): Promise<void> {
    this.busy = true;
    this.rerender();
    try {
      const resp = (await this.options.client.review(
        this.options.sessionId,
        "regenerate",
        this.note,
      )) as { job_id?: string };
      if (resp.job_id) {
        await this.options.client.waitForJob(resp.job_id);
      }
      await this.load();
      this.options.onRegenerated?.();
    } catch (err) {
      this.error = err instanceof ApiError ? err.detail : String(err);
    } finally {
      this.busy = false;
      this.rerender();
    }
  }

  render(root: HTMLElement): void {
    this.root = root;
    this.rerender();
  }

  private rerender(): void {
    if (!this.root) return;
    const doc = this.root.ownerDocument;
    this.root.textContent = "";
    const panel = doc.createElement("section");
    panel.className = "review-console";

    if (!this.view) {
      panel.textContent = "正在加载草稿…";
      this.root.appendChild(panel);
      return;
    }

    const heading = doc.createElement("h2");
    heading.textContent =
      `草稿审核 · ${this.view.episode.target_food} · ` +
      `${this.view.episode.pages.length} 页`;
    panel.appendChild(heading);

    const list = doc.createElement("ol");
    list.className = "review-pages";
    for (const page of this.view.episode.pages) {
      const item = doc.createElement("li");
      item.className = "review-page";
      item.dataset["pageId"] = page.page_id;
      const assetId = this.view.page_images[page.page_id];
      if (assetId) {
        const img = doc.createElement("img");
        img.src = this.options.client.assetUrl(assetId);
        img.alt = `第 ${page.page_no} 页`;
        item.appendChild(img);
      }
      const text = doc.createElement("p");
      text.textContent = page.page_text_cn;
      item.appendChild(text);
      if (page.interaction && page.interaction.type !== "none") {
        const tag = doc.createElement("span");
        tag.className = "interaction-tag";
        tag.textContent = `互动：${page.interaction.type}`;
        item.appendChild(tag);
      }
      list.appendChild(item);
    }
    panel.appendChild(list);

    const noteBox = doc.createElement("textarea");
    noteBox.className = "regeneration-note";
    noteBox.placeholder = "想改哪里？写给故事机（可留空）";
    noteBox.value = this.note;
    noteBox.addEventListener("input", () => (this.note = noteBox.value));
    panel.appendChild(noteBox);

    if (this.error) {
      const error = doc.createElement("p");
      error.className = "form-error";
      error.textContent = this.error;
      panel.appendChild(error);
    }

    const approve = doc.createElement("button");
    approve.className = "review-approve";
    approve.textContent = "通过，给孩子看";
    approve.disabled = this.busy;
    approve.addEventListener("click", () => void this.approve());
    panel.appendChild(approve);

    const redo = doc.createElement("button");
    redo.className = "review-regenerate";
    redo.textContent = this.busy ? "处理中…" : "重新生成";
    redo.disabled = this.busy;
    redo.addEventListener("click", () => void this.regenerate());
    panel.appendChild(redo);

    this.root.appendChild(panel);
  }
}
