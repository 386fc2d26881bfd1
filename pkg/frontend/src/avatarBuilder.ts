// Avatar creation form: nickname, gender, clothing, accessories. The
// nickname is guarded client-side; server 422s surface inline.

import { ApiClient, ApiError } from "./api.js";
import type { Avatar } from "./types.js";

export interface AvatarBuilderOptions {
  client: ApiClient;
  onCreated?: (avatar: Avatar) => void;
}

const GENDERS: Array<[string, string]> = [
  ["girl", "女孩"],
  ["boy", "男孩"],
  ["unspecified", "不说啦"],
];

const CLOTHING = ["黄色小雨衣", "蓝色小围裙", "绿色运动衫", "粉色连衣裙"];
const ACCESSORIES = ["红色小背包", "星星发夹", "小恐龙帽子", "彩虹手环"];

export class AvatarBuilder {
  private root: HTMLElement | null = null;
  private error = "";
  private created: Avatar | null = null;
  private selections = {
    nickname: "",
    gender: "unspecified",
    clothing: CLOTHING[0] ?? "",
    accessories: new Set<string>(),
  };

  constructor(private options: AvatarBuilderOptions) {}

  get avatar(): Avatar | null {
    return this.created;
  }

  /** Client-side guard; returns the problem text or null when submittable. */
  validate(): string | null {
    if (!this.selections.nickname.trim()) {
      return "先给自己起个小名吧";
    }
    return null;
  }

  async submit(): Promise<Avatar | null> {
    const problem = this.validate();
    if (problem) {
      this.error = problem;
      this.rerender();
      return null;
    }
    try {
      const avatar = await this.options.client.createAvatar({
        nickname: this.selections.nickname.trim(),
        gender: this.selections.gender,
        clothing: this.selections.clothing,
        accessories: [...this.selections.accessories],
      });
      this.created = avatar;
      this.error = "";
      this.options.onCreated?.(avatar);
      this.rerender();
      return avatar;
    } catch (err) {
      this.error = err instanceof ApiError ? err.detail : String(err);
      this.rerender();
      return null;
    }
  }

  setNickname(value: string): void {
    this.selections.nickname = value;
  }

  render(root: HTMLElement): void {
    this.root = root;
    this.rerender();
  }

  private rerender(): void {
    if (!this.root) return;
    const doc = this.root.ownerDocument;
    this.root.textContent = "";
    const form = doc.createElement("form");
    form.className = "avatar-builder";
    form.addEventListener("submit", (e) => {
      e.preventDefault();
      void this.submit();
    });

    const nickLabel = doc.createElement("label");
    nickLabel.textContent = "小名";
    const nick = doc.createElement("input");
    nick.className = "nickname-input";
    nick.value = this.selections.nickname;
    nick.addEventListener("input", () => this.setNickname(nick.value));
    nickLabel.appendChild(nick);
    form.appendChild(nickLabel);

    const genderBox = doc.createElement("div");
    genderBox.className = "gender-options";
    for (const [value, label] of GENDERS) {
      const button = doc.createElement("button");
      button.type = "button";
      button.className =
        value === this.selections.gender ? "gender selected" : "gender";
      button.textContent = label;
      button.addEventListener("click", () => {
        this.selections.gender = value;
        this.rerender();
      });
      genderBox.appendChild(button);
    }
    form.appendChild(genderBox);

    const clothingSelect = doc.createElement("select");
    clothingSelect.className = "clothing-select";
    for (const item of CLOTHING) {
      const option = doc.createElement("option");
      option.value = item;
      option.textContent = item;
      option.selected = item === this.selections.clothing;
      clothingSelect.appendChild(option);
    }
    clothingSelect.addEventListener("change", () => {
      this.selections.clothing = clothingSelect.value;
    });
    form.appendChild(clothingSelect);

    const accessoriesBox = doc.createElement("div");
    accessoriesBox.className = "accessory-options";
    for (const item of ACCESSORIES) {
      const label = doc.createElement("label");
      const checkbox = doc.createElement("input");
      checkbox.type = "checkbox";
      checkbox.value = item;
      checkbox.checked = this.selections.accessories.has(item);
      checkbox.addEventListener("change", () => {
        if (checkbox.checked) this.selections.accessories.add(item);
        else this.selections.accessories.delete(item);
      });
      label.appendChild(checkbox);
      label.appendChild(doc.createTextNode(item));
      accessoriesBox.appendChild(label);
    }
    form.appendChild(accessoriesBox);

    if (this.error) {
      const error = doc.createElement("p");
      error.className = "form-error";
      error.textContent = this.error;
      form.appendChild(error);
    }

    const submit = doc.createElement("button");
    submit.type = "submit";
    submit.className = "avatar-submit";
    submit.textContent = "就是这个我";
    form.appendChild(submit);

    if (this.created) {
      const preview = doc.createElement("div");
      preview.className = "avatar-preview";
      preview.textContent =
        `${this.created.nickname} · ${this.created.clothing}` +
        (this.created.accessories.length
          ? ` · ${this.created.accessories.join("、")}`
          : "");
      this.root.appendChild(preview);
    }
    this.root.appendChild(form);
  }
}
